#include "dmc/motion_io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dmc/errors.hpp"

namespace dmc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require_key(const json& doc, const char* key, const std::string& where) {
    if (!doc.is_object() || !doc.contains(key)) throw ParseError(where + key + ": missing key");
    return doc.at(key);
}

double require_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ParseError(field + ": expected a number");
    return v.get<double>();
}

int require_int(const json& v, const std::string& field) {
    if (!v.is_number_integer()) throw ParseError(field + ": expected an integer");
    return v.get<int>();
}

std::shared_ptr<const Skeleton> parse_skeleton(const json& doc) {
    if (!doc.is_object()) throw ParseError("skeleton: expected an object");
    Skeleton sk;
    const auto& names = require_key(doc, "joint_names", "skeleton.");
    if (!names.is_array()) throw ParseError("skeleton.joint_names: expected an array");
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!names[i].is_string()) throw ParseError("skeleton.joint_names[" + std::to_string(i) + "]: expected a string");
        sk.joint_names.push_back(names[i].get<std::string>());
    }
    const auto& feet = require_key(doc, "foot_indices", "skeleton.");
    if (!feet.is_array() || feet.size() != 2) throw ParseError("skeleton.foot_indices: expected [left, right]");
    sk.foot_indices = {require_int(feet[0], "skeleton.foot_indices[0]"),
                       require_int(feet[1], "skeleton.foot_indices[1]")};
    if (doc.contains("parent") && !doc.at("parent").is_null()) {
        const auto& parent = doc.at("parent");
        if (!parent.is_array()) throw ParseError("skeleton.parent: expected an array or null");
        std::vector<int> p;
        for (std::size_t i = 0; i < parent.size(); ++i) {
            p.push_back(require_int(parent[i], "skeleton.parent[" + std::to_string(i) + "]"));
        }
        sk.parent = std::move(p);
    }
    // Share the canonical rig when the document describes it.
    auto canonical = Skeleton::locomotion7();
    if (sk == *canonical) return canonical;
    return std::make_shared<const Skeleton>(std::move(sk));
}

}  // namespace

json to_json(const MotionRecord& record) {
    const auto& m = record.motion;
    json doc;
    doc["fps"] = m.fps;
    json sk;
    sk["joint_names"] = m.skeleton->joint_names;
    sk["foot_indices"] = {m.skeleton->foot_indices[0], m.skeleton->foot_indices[1]};
    sk["parent"] = m.skeleton->parent ? json(*m.skeleton->parent) : json(nullptr);
    doc["skeleton"] = std::move(sk);
    json frames = json::array();
    for (Index t = 0; t < m.frame_count(); ++t) {
        json pose = json::array();
        for (Index j = 0; j < m.joint_count(); ++j) {
            pose.push_back({m.frames(t, 3 * j), m.frames(t, 3 * j + 1), m.frames(t, 3 * j + 2)});
        }
        frames.push_back(std::move(pose));
    }
    doc["frames"] = std::move(frames);
    if (record.condition) {
        const auto& c = record.condition->values;
        doc["condition"] = std::vector<double>(c.data(), c.data() + c.size());
    } else {
        doc["condition"] = nullptr;
    }
    doc["label"] = record.label ? json(*record.label) : json(nullptr);
    doc["provenance"] = to_string(record.provenance);
    return doc;
}

MotionRecord record_from_json(const json& doc, std::optional<Index> condition_dim) {
    if (!doc.is_object()) throw ParseError("document: expected a JSON object");
    MotionRecord rec;
    rec.motion.fps = require_number(require_key(doc, "fps", ""), "fps");
    rec.motion.skeleton = parse_skeleton(require_key(doc, "skeleton", ""));

    const auto& frames = require_key(doc, "frames", "");
    if (!frames.is_array()) throw ParseError("frames: expected an array");
    const auto t_count = static_cast<Index>(frames.size());
    const Index j_count = rec.motion.skeleton->joint_count();
    rec.motion.frames.resize(t_count, 3 * j_count);
    for (Index t = 0; t < t_count; ++t) {
        const auto& pose = frames[t];
        const std::string where = "frames[" + std::to_string(t) + "]";
        if (!pose.is_array()) throw ParseError(where + ": expected an array of joints");
        if (static_cast<Index>(pose.size()) != j_count) {
            throw ValidationError(where + ": has " + std::to_string(pose.size()) + " joints, skeleton has " +
                                  std::to_string(j_count));
        }
        for (Index j = 0; j < j_count; ++j) {
            const auto& p = pose[j];
            if (!p.is_array() || p.size() != 3) {
                throw ParseError(where + "[" + std::to_string(j) + "]: expected [x, y, z]");
            }
            for (int k = 0; k < 3; ++k) {
                // Non-finite values cannot be expressed in JSON; null is read as NaN and flagged below.
                rec.motion.frames(t, 3 * j + k) =
                    p[k].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                   : require_number(p[k], where + "[" + std::to_string(j) + "]");
            }
        }
    }

    if (doc.contains("condition") && !doc.at("condition").is_null()) {
        const auto& c = doc.at("condition");
        if (!c.is_array()) throw ParseError("condition: expected an array or null");
        ConditionVector cv{Vector(static_cast<Index>(c.size()))};
        for (std::size_t i = 0; i < c.size(); ++i) {
            cv.values(static_cast<Index>(i)) = require_number(c[i], "condition[" + std::to_string(i) + "]");
        }
        rec.condition = std::move(cv);
    }
    if (doc.contains("label") && !doc.at("label").is_null()) {
        if (!doc.at("label").is_string()) throw ParseError("label: expected a string or null");
        rec.label = doc.at("label").get<std::string>();
    }
    const auto& prov = require_key(doc, "provenance", "");
    if (!prov.is_string()) throw ParseError("provenance: expected a string");
    rec.provenance = provenance_from_string(prov.get<std::string>());

    require_valid(rec, condition_dim);
    return rec;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string() + ": cannot open");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& doc, const fs::path& path, int indent) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << doc.dump(indent) << '\n';
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

MotionRecord read_motion_file(const fs::path& path, std::optional<Index> condition_dim) {
    const auto doc = read_json_file(path);
    try {
        return record_from_json(doc, condition_dim);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_motion_file(const MotionRecord& record, const fs::path& path) {
    // nlohmann emits the shortest decimal that round-trips each double.
    write_json_file(to_json(record), path, -1);
}

Corpus read_corpus(const fs::path& path, std::optional<Index> condition_dim) {
    Corpus corpus;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            const auto& p = entry.path();
            if (entry.is_regular_file() && p.extension() == ".json" && p.filename().string().rfind("record_", 0) == 0) {
                files.push_back(p);
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) corpus.push_back(read_motion_file(f, condition_dim));
    } else if (path.extension() == ".jsonl") {
        std::ifstream in(path);
        if (!in) throw ParseError(path.string() + ": cannot open");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                corpus.push_back(record_from_json(json::parse(line), condition_dim));
            } catch (const json::parse_error& e) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            } catch (const ParseError& e) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    } else if (fs::is_regular_file(path)) {
        corpus.push_back(read_motion_file(path, condition_dim));
    } else {
        throw ParseError(path.string() + ": no such corpus");
    }
    return corpus;
}

void write_corpus(std::span<const MotionRecord> corpus, const fs::path& path) {
    if (path.extension() == ".jsonl") {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
        for (const auto& r : corpus) out << to_json(r).dump() << '\n';
        return;
    }
    fs::create_directories(path);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::ostringstream name;
        name << "record_" << std::setw(5) << std::setfill('0') << i << ".json";
        write_motion_file(corpus[i], path / name.str());
    }
}

}  // namespace dmc
