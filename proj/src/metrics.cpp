#include "dmc/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "dmc/errors.hpp"

namespace dmc {

void ContactParams::validate() const {
    if (!(contact_height_threshold > 0) || !(skate_displacement_threshold > 0) || !(clip_distance_threshold > 0)) {
        throw ParameterError("contact thresholds must be > 0");
    }
}

nlohmann::json to_json(const ContactParams& p) {
    return {{"contact_height_threshold", p.contact_height_threshold},
            {"skate_displacement_threshold", p.skate_displacement_threshold},
            {"clip_distance_threshold", p.clip_distance_threshold}};
}

ContactParams contact_params_from_json(const nlohmann::json& doc) {
    ContactParams p;
    if (doc.is_null()) return p;
    auto read = [&doc](const char* key, double& v) {
        if (!doc.contains(key)) return;
        if (!doc.at(key).is_number()) throw ParseError(std::string("contact.") + key + ": expected a number");
        v = doc.at(key).get<double>();
    };
    read("contact_height_threshold", p.contact_height_threshold);
    read("skate_displacement_threshold", p.skate_displacement_threshold);
    read("clip_distance_threshold", p.clip_distance_threshold);
    p.validate();
    return p;
}

ContactMask detect_contact(const MotionSequence& m, const ContactParams& params) {
    const Index T = m.frame_count();
    ContactMask mask(T, 2);
    for (int f = 0; f < 2; ++f) {
        const Index j = m.skeleton->foot_indices[f];
        for (Index t = 0; t < T; ++t) mask(t, f) = m.height(t, j) < params.contact_height_threshold;
    }
    return mask;
}

Eigen::ArrayX2d foot_step_lengths(const MotionSequence& m) {
    const Index T = m.frame_count();
    Eigen::ArrayX2d steps = Eigen::ArrayX2d::Zero(T, 2);
    if (T < 2) return steps;
    for (int f = 0; f < 2; ++f) {
        const Index c = 3 * m.skeleton->foot_indices[f];
        for (Index t = 0; t + 1 < T; ++t) {
            const double dx = m.frames(t + 1, c) - m.frames(t, c);
            const double dz = m.frames(t + 1, c + 2) - m.frames(t, c + 2);
            steps(t, f) = std::sqrt(dx * dx + dz * dz);
        }
        steps(T - 1, f) = steps(T - 2, f);
    }
    return steps;
}

std::vector<bool> planted_frames(const MotionSequence& m, const ContactParams& params) {
    const auto steps = foot_step_lengths(m);
    std::vector<bool> planted(static_cast<std::size_t>(m.frame_count()));
    for (Index t = 0; t < m.frame_count(); ++t) {
        planted[t] = (steps.row(t) <= params.skate_displacement_threshold).any();
    }
    return planted;
}

Vector lowest_joint_heights(const MotionSequence& m) {
    Vector h(m.frame_count());
    for (Index t = 0; t < m.frame_count(); ++t) {
        h(t) = m.frames.row(t)(Eigen::seqN(1, m.joint_count(), 3)).minCoeff();
    }
    return h;
}

ContactTally& ContactTally::operator+=(const ContactTally& o) {
    skating += o.skating;
    contact += o.contact;
    float_sum += o.float_sum;
    penetrate_sum += o.penetrate_sum;
    planted += o.planted;
    clip_sum += o.clip_sum;
    frames += o.frames;
    return *this;
}

ContactTally contact_tally(const MotionSequence& m, const ContactParams& params) {
    ContactTally tally;
    const Index T = m.frame_count();
    const auto mask = detect_contact(m, params);
    const auto steps = foot_step_lengths(m);
    for (Index t = 0; t + 1 < T; ++t) {
        for (int f = 0; f < 2; ++f) {
            if (!mask(t, f)) continue;
            tally.contact += 1;
            if (steps(t, f) > params.skate_displacement_threshold) tally.skating += 1;
        }
    }

    const auto planted = planted_frames(m, params);
    const Vector h = lowest_joint_heights(m);
    for (Index t = 0; t < T; ++t) {
        if (!planted[t]) continue;
        tally.planted += 1;
        tally.float_sum += std::max(h(t), 0.0);
        tally.penetrate_sum += std::max(-h(t), 0.0);
    }

    const Index l = 3 * m.skeleton->left_foot();
    const Index r = 3 * m.skeleton->right_foot();
    for (Index t = 0; t < T; ++t) {
        const double d = (m.frames.row(t).segment<3>(l) - m.frames.row(t).segment<3>(r)).norm();
        tally.clip_sum += std::max(0.0, params.clip_distance_threshold - d);
    }
    tally.frames = static_cast<double>(T);
    return tally;
}

double skate_ratio(const MotionSequence& m, const ContactParams& params) {
    return contact_tally(m, params).skate_ratio();
}

FloatPenetrate float_and_penetrate(const MotionSequence& m, const ContactParams& params) {
    const auto tally = contact_tally(m, params);
    return {tally.float_mean(), tally.penetrate_mean()};
}

double clip_metric(const MotionSequence& m, const ContactParams& params) {
    return contact_tally(m, params).clip_mean();
}

namespace {

struct ErrorSum {
    double sum = 0;
    double count = 0;
};

ErrorSum joint_error_sum(const MotionSequence& a, const MotionSequence& b) {
    if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols()) {
        throw ShapeError("mpjpe: sequences differ in frame or joint count");
    }
    ErrorSum e;
    for (Index t = 0; t < a.frame_count(); ++t) {
        for (Index j = 0; j < a.joint_count(); ++j) {
            e.sum += (a.frames.row(t).segment<3>(3 * j) - b.frames.row(t).segment<3>(3 * j)).norm();
        }
    }
    e.count = static_cast<double>(a.frame_count() * a.joint_count());
    return e;
}

struct Moments {
    Vector mean;
    Matrix cov;
};

Moments moments(const Matrix& x) {
    const Vector mean = x.colwise().mean().transpose();
    const Matrix centred = x.rowwise() - mean.transpose();
    Matrix cov = (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += 1e-6;
    return {mean, cov};
}

Matrix psd_sqrt(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double mpjpe(const MotionSequence& a, const MotionSequence& b) {
    const auto e = joint_error_sum(a, b);
    return 1000.0 * e.sum / e.count;
}

double frechet_distance(const Matrix& features_a, const Matrix& features_b) {
    if (features_a.cols() != features_b.cols()) throw ShapeError("frechet_distance: feature widths differ");
    const Index dim = features_a.cols();
    if (features_a.rows() < dim + 1 || features_b.rows() < dim + 1) {
        throw UsageError("frechet_distance: need at least " + std::to_string(dim + 1) + " samples per set");
    }
    const auto a = moments(features_a);
    const auto b = moments(features_b);
    // Tr sqrt(Sa Sb) = Tr sqrt(Sa^1/2 Sb Sa^1/2), the latter symmetric PSD.
    const Matrix root_a = psd_sqrt(a.cov);
    Matrix product = root_a * b.cov * root_a;
    product = 0.5 * (product + product.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(product, Eigen::EigenvaluesOnly);
    const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
    return std::max(d, 0.0);
}

Vector motion_features(const MotionSequence& m, const ContactParams& params) {
    const Index T = m.frame_count();
    const Index J = m.joint_count();
    Vector out(4 * J + 4);
    for (Index j = 0; j < J; ++j) {
        const Eigen::ArrayXd h = m.frames.col(3 * j + 1).array();
        const double mean = h.mean();
        out(j) = mean;
        out(J + j) = std::sqrt((h - mean).square().mean());

        Eigen::ArrayXd speed(T - 1);
        for (Index t = 0; t + 1 < T; ++t) {
            speed(t) = (m.frames.row(t + 1).segment<3>(3 * j) - m.frames.row(t).segment<3>(3 * j)).norm() * m.fps;
        }
        const double smean = speed.mean();
        out(2 * J + j) = smean;
        out(3 * J + j) = std::sqrt((speed - smean).square().mean());
    }
    const auto mask = detect_contact(m, params);
    const double seconds = static_cast<double>(T - 1) / m.fps;
    for (int f = 0; f < 2; ++f) {
        out(4 * J + f) = mask.col(f).cast<double>().mean();
        double transitions = 0;
        for (Index t = 0; t + 1 < T; ++t) transitions += mask(t, f) != mask(t + 1, f) ? 1.0 : 0.0;
        out(4 * J + 2 + f) = transitions / seconds;
    }
    return out;
}

RPrecision r_precision(const Matrix& motion_embeddings, const Matrix& condition_embeddings, Index pool_size) {
    if (motion_embeddings.rows() != condition_embeddings.rows() ||
        motion_embeddings.cols() != condition_embeddings.cols()) {
        throw ShapeError("r_precision: embedding matrices must have equal shape");
    }
    if (pool_size < 1) throw ParameterError("r_precision: pool_size must be >= 1");
    const Index n = motion_embeddings.rows();
    if (n < pool_size) {
        throw UsageError("r_precision: need at least " + std::to_string(pool_size) + " pairs, got " +
                         std::to_string(n));
    }
    RPrecision out;
    std::array<double, 3> hits{0, 0, 0};
    for (Index start = 0; start + pool_size <= n; start += pool_size) {
        for (Index q = start; q < start + pool_size; ++q) {
            const double own = (motion_embeddings.row(q) - condition_embeddings.row(q)).squaredNorm();
            Index closer = 0;
            for (Index c = start; c < start + pool_size; ++c) {
                if (c != q && (motion_embeddings.row(q) - condition_embeddings.row(c)).squaredNorm() < own) ++closer;
            }
            for (Index k = 0; k < 3; ++k) hits[k] += closer <= k ? 1.0 : 0.0;
            ++out.queries;
        }
    }
    for (int k = 0; k < 3; ++k) out.top[k] = hits[k] / static_cast<double>(out.queries);
    return out;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["fid"] = r.fid ? nlohmann::json(*r.fid) : nlohmann::json(nullptr);
    if (r.r_precision) {
        j["r_precision"] = {{"top1", r.r_precision->top[0]},
                            {"top2", r.r_precision->top[1]},
                            {"top3", r.r_precision->top[2]},
                            {"queries", r.r_precision->queries}};
    } else {
        j["r_precision"] = nullptr;
    }
    j["mpjpe_mm"] = r.mpjpe ? nlohmann::json(*r.mpjpe) : nlohmann::json(nullptr);
    j["skate_ratio"] = r.skate_ratio;
    j["float_mean_m"] = r.float_mean;
    j["penetrate_mean_m"] = r.penetrate_mean;
    j["clip_mean_m"] = r.clip_mean;
    j["n_sequences"] = r.n_sequences;
    j["params"] = to_json(r.params);
    j["notes"] = r.notes;
    return j;
}

MetricsReport evaluate_corpus(std::span<const MotionRecord> reference, std::span<const MotionRecord> test,
                              const ContactParams& params, const MotionEmbedder& embedder, Index pool_size) {
    params.validate();
    MetricsReport report;
    report.params = params;
    report.n_sequences = test.size();

    ContactTally tally;
    for (const auto& r : test) tally += contact_tally(r.motion, params);
    report.skate_ratio = tally.skate_ratio();
    report.float_mean = tally.float_mean();
    report.penetrate_mean = tally.penetrate_mean();
    report.clip_mean = tally.clip_mean();

    if (reference.size() != test.size()) {
        report.notes.push_back("mpjpe skipped: reference and test corpora differ in size");
    } else {
        try {
            ErrorSum total;
            for (std::size_t i = 0; i < test.size(); ++i) {
                const auto e = joint_error_sum(reference[i].motion, test[i].motion);
                total.sum += e.sum;
                total.count += e.count;
            }
            report.mpjpe = total.count > 0 ? 1000.0 * total.sum / total.count : 0.0;
        } catch (const ShapeError& e) {
            report.notes.push_back(std::string("mpjpe skipped: ") + e.what());
        }
    }

    if (!reference.empty() && !test.empty()) {
        auto features = [&params](std::span<const MotionRecord> c) {
            Matrix f(static_cast<Index>(c.size()), motion_features(c[0].motion, params).size());
            for (std::size_t i = 0; i < c.size(); ++i) f.row(static_cast<Index>(i)) = motion_features(c[i].motion, params);
            return f;
        };
        try {
            report.fid = frechet_distance(features(reference), features(test));
        } catch (const UsageError& e) {
            report.notes.push_back(std::string("fid skipped: ") + e.what());
        }
    }

    if (embedder) {
        const bool have_conditions =
            std::all_of(test.begin(), test.end(), [](const MotionRecord& r) { return r.condition.has_value(); });
        if (!have_conditions) {
            report.notes.push_back("r_precision skipped: test records lack conditions");
        } else if (static_cast<Index>(test.size()) < pool_size) {
            report.notes.push_back("r_precision skipped: fewer records than the candidate pool");
        } else {
            const Index dim = test[0].condition->size();
            Matrix motion_emb(static_cast<Index>(test.size()), dim);
            Matrix cond_emb(static_cast<Index>(test.size()), dim);
            for (std::size_t i = 0; i < test.size(); ++i) {
                motion_emb.row(static_cast<Index>(i)) = embedder(test[i].motion).transpose();
                cond_emb.row(static_cast<Index>(i)) = test[i].condition->values.transpose();
            }
            report.r_precision = r_precision(motion_emb, cond_emb, pool_size);
        }
    }
    return report;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ostringstream os;
    auto opt = [](const std::optional<double>& v, int prec) {
        std::ostringstream s;
        if (v) {
            s << std::fixed << std::setprecision(prec) << *v;
        } else {
            s << "-";
        }
        return s.str();
    };
    os << std::left << std::setw(24) << "Method" << std::right << std::setw(10) << "FID" << std::setw(8) << "Top-1"
       << std::setw(8) << "Top-2" << std::setw(8) << "Top-3" << std::setw(10) << "MPJPE" << std::setw(9) << "Skate"
       << std::setw(11) << "Float (m)" << std::setw(15) << "Penetrate (m)" << std::setw(10) << "Clip (m)" << '\n';
    for (const auto& [name, r] : rows) {
        std::optional<double> t1, t2, t3;
        if (r.r_precision) {
            t1 = r.r_precision->top[0];
            t2 = r.r_precision->top[1];
            t3 = r.r_precision->top[2];
        }
        os << std::left << std::setw(24) << name << std::right << std::setw(10) << opt(r.fid, 4) << std::setw(8)
           << opt(t1, 3) << std::setw(8) << opt(t2, 3) << std::setw(8) << opt(t3, 3) << std::setw(10)
           << opt(r.mpjpe, 2) << std::setw(9) << opt(r.skate_ratio, 4) << std::setw(11) << opt(r.float_mean, 4)
           << std::setw(15) << opt(r.penetrate_mean, 4) << std::setw(10) << opt(r.clip_mean, 4) << '\n';
    }
    return os.str();
}

}  // namespace dmc
