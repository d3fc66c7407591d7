#include "dmc/motion.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "dmc/errors.hpp"

namespace dmc {

std::shared_ptr<const Skeleton> Skeleton::locomotion7() {
    static const auto rig = std::make_shared<const Skeleton>(Skeleton{
        {"pelvis", "spine", "head", "left_knee", "right_knee", "left_foot", "right_foot"},
        {5, 6},
        std::vector<int>{-1, 0, 1, 0, 0, 3, 4}});
    return rig;
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::clean: return "clean";
        case Provenance::distorted: return "distorted";
        case Provenance::refined: return "refined";
        case Provenance::generated: return "generated";
    }
    return "clean";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "clean") return Provenance::clean;
    if (s == "distorted") return Provenance::distorted;
    if (s == "refined") return Provenance::refined;
    if (s == "generated") return Provenance::generated;
    throw ParseError("provenance: unknown tag '" + s + "'");
}

std::vector<Violation> validate(const Skeleton& skeleton) {
    std::vector<Violation> out;
    const auto& names = skeleton.joint_names;
    if (names.empty()) out.push_back({"skeleton.joint_names", "must be non-empty"});
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) out.push_back({"skeleton.joint_names", "duplicate joint name '" + n + "'"});
    }
    const auto j = static_cast<int>(names.size());
    for (int k = 0; k < 2; ++k) {
        const int f = skeleton.foot_indices[k];
        if (f < 0 || f >= j) {
            out.push_back({"skeleton.foot_indices[" + std::to_string(k) + "]", "index out of range"});
        }
    }
    if (skeleton.foot_indices[0] == skeleton.foot_indices[1]) {
        out.push_back({"skeleton.foot_indices", "left and right feet must be distinct"});
    }
    if (skeleton.parent) {
        const auto& parent = *skeleton.parent;
        if (static_cast<int>(parent.size()) != j) {
            out.push_back({"skeleton.parent", "length must equal joint count"});
        } else {
            for (int i = 0; i < j; ++i) {
                if (parent[i] < -1 || parent[i] >= j || parent[i] == i) {
                    out.push_back({"skeleton.parent[" + std::to_string(i) + "]", "invalid parent index"});
                }
            }
        }
    }
    return out;
}

std::vector<Violation> validate(const MotionSequence& motion) {
    std::vector<Violation> out;
    if (!(motion.fps > 0.0) || !std::isfinite(motion.fps)) out.push_back({"fps", "must be a positive finite number"});
    if (!motion.skeleton) {
        out.push_back({"skeleton", "missing"});
    } else {
        auto sk = validate(*motion.skeleton);
        out.insert(out.end(), sk.begin(), sk.end());
        if (motion.frames.cols() != 3 * motion.skeleton->joint_count()) {
            out.push_back({"frames", "joint count must equal skeleton joint count"});
        }
    }
    if (motion.frames.rows() < 2) out.push_back({"frames", "need at least 2 frames"});
    for (Index t = 0; t < motion.frames.rows(); ++t) {
        if (!motion.frames.row(t).allFinite()) {
            out.push_back({"frames[" + std::to_string(t) + "]", "coordinates must be finite"});
        }
    }
    return out;
}

std::vector<Violation> validate(const MotionRecord& record, std::optional<Index> condition_dim) {
    auto out = validate(record.motion);
    if (record.condition) {
        const auto& c = *record.condition;
        if (condition_dim && c.size() != *condition_dim) {
            out.push_back({"condition", "length " + std::to_string(c.size()) + " != configured d_e " +
                                            std::to_string(*condition_dim)});
        }
        if (!c.values.allFinite()) out.push_back({"condition", "entries must be finite"});
    }
    return out;
}

std::vector<Violation> validate(std::span<const MotionRecord> corpus, std::optional<Index> condition_dim) {
    std::vector<Violation> out;
    std::optional<Index> width = condition_dim;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (auto v : validate(corpus[i], condition_dim)) {
            v.field = "record[" + std::to_string(i) + "]." + v.field;
            out.push_back(std::move(v));
        }
        if (corpus[i].condition) {
            if (!width) width = corpus[i].condition->size();
            if (corpus[i].condition->size() != *width) {
                out.push_back({"record[" + std::to_string(i) + "].condition", "dimension inconsistent across corpus"});
            }
        }
    }
    return out;
}

std::string describe(const std::vector<Violation>& violations) {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "; ";
        os << violations[i].field << ": " << violations[i].rule;
    }
    return os.str();
}

void require_valid(const MotionRecord& record, std::optional<Index> condition_dim) {
    const auto v = validate(record, condition_dim);
    if (!v.empty()) throw ValidationError(describe(v));
}

}  // namespace dmc
