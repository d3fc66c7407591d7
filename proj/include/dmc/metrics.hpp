#pragma once

#include <array>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmc/motion.hpp"

namespace dmc {

struct ContactParams {
    double contact_height_threshold = 0.05;      // m
    double skate_displacement_threshold = 0.025;  // m per frame
    double clip_distance_threshold = 0.05;        // m

    void validate() const;
};

nlohmann::json to_json(const ContactParams& p);
ContactParams contact_params_from_json(const nlohmann::json& doc);

/// T x 2 (left, right): foot height below contact_height_threshold.
using ContactMask = Eigen::Array<bool, Eigen::Dynamic, 2>;

ContactMask detect_contact(const MotionSequence& m, const ContactParams& params = {});

/// Horizontal (x, z) displacement of each foot to the next frame; the last
/// frame repeats the previous step. T x 2.
Eigen::ArrayX2d foot_step_lengths(const MotionSequence& m);

/// Frames with at least one planted foot, i.e. a foot whose horizontal step
/// is within the skate threshold. The set is invariant to vertical shifts,
/// so float / penetrate respond to a bias b by exactly b.
std::vector<bool> planted_frames(const MotionSequence& m, const ContactParams& params = {});

/// Height of the lowest joint per frame.
Vector lowest_joint_heights(const MotionSequence& m);

/// Pooled sums and counts for the contact metrics; merging tallies of
/// several sequences gives the corpus-level values.
struct ContactTally {
    double skating = 0;         // contact frames that slide past the threshold
    double contact = 0;         // contact frames with a successor
    double float_sum = 0;       // sum of max(h_min, 0) over planted frames
    double penetrate_sum = 0;   // sum of max(-h_min, 0) over planted frames
    double planted = 0;         // planted frame count
    double clip_sum = 0;        // sum of per-frame clip penalties
    double frames = 0;

    ContactTally& operator+=(const ContactTally& o);

    double skate_ratio() const { return contact > 0 ? skating / contact : 0.0; }
    double float_mean() const { return planted > 0 ? float_sum / planted : 0.0; }
    double penetrate_mean() const { return planted > 0 ? penetrate_sum / planted : 0.0; }
    double clip_mean() const { return frames > 0 ? clip_sum / frames : 0.0; }
};

ContactTally contact_tally(const MotionSequence& m, const ContactParams& params = {});

/// Fraction of (frame, foot) contacts whose horizontal displacement to the
/// next frame exceeds the skate threshold. 0 when nothing is in contact.
double skate_ratio(const MotionSequence& m, const ContactParams& params = {});

struct FloatPenetrate {
    double float_mean = 0;      // m
    double penetrate_mean = 0;  // m
};

/// Mean clearance of the lowest joint over planted frames, split into its
/// positive (floating) and negative (penetrating) parts.
FloatPenetrate float_and_penetrate(const MotionSequence& m, const ContactParams& params = {});

/// Mean over frames of max(0, threshold - |left foot - right foot|).
double clip_metric(const MotionSequence& m, const ContactParams& params = {});

/// Mean per-joint Euclidean error in millimetres, no alignment.
double mpjpe(const MotionSequence& a, const MotionSequence& b);

/// Gaussian Frechet distance between two sample sets (one sample per row).
/// Needs at least dim + 1 rows in each set.
double frechet_distance(const Matrix& features_a, const Matrix& features_b);

/// Hand-crafted motion descriptor, 4J + 4 entries in this order:
///   [0, J)        mean height of each joint
///   [J, 2J)       std of height of each joint
///   [2J, 3J)      mean speed of each joint (m/s, frame differences)
///   [3J, 4J)      std of speed of each joint
///   [4J, 4J+2)    contact fraction of left / right foot
///   [4J+2, 4J+4)  contact on/off transitions per second, left / right
Vector motion_features(const MotionSequence& m, const ContactParams& params = {});

struct RPrecision {
    std::array<double, 3> top{0, 0, 0};  // top-1, top-2, top-3
    std::size_t queries = 0;
};

inline constexpr Index kDefaultPoolSize = 32;

/// Rows of the two matrices are paired embeddings in a shared space. Queries
/// are taken in consecutive groups of pool_size; each motion ranks its own
/// condition against the other pool_size - 1 conditions of its group by
/// Euclidean distance. Leftover rows that do not fill a group are dropped.
RPrecision r_precision(const Matrix& motion_embeddings, const Matrix& condition_embeddings,
                       Index pool_size = kDefaultPoolSize);

using MotionEmbedder = std::function<Vector(const MotionSequence&)>;

struct MetricsReport {
    double skate_ratio = 0;
    double float_mean = 0;
    double penetrate_mean = 0;
    double clip_mean = 0;
    std::optional<double> mpjpe;        // mm
    std::optional<double> fid;
    std::optional<RPrecision> r_precision;
    std::size_t n_sequences = 0;
    ContactParams params;
    std::vector<std::string> notes;     // metrics that were skipped and why
};

nlohmann::json to_json(const MetricsReport& r);

/// Physical metrics of `test`; MPJPE against index-aligned `reference`;
/// Frechet distance between the two corpora's motion_features; R-Precision
/// when an embedder is supplied and `test` carries conditions.
MetricsReport evaluate_corpus(std::span<const MotionRecord> reference, std::span<const MotionRecord> test,
                              const ContactParams& params = {}, const MotionEmbedder& embedder = {},
                              Index pool_size = kDefaultPoolSize);

/// Fixed-width table in the column order
/// FID | R-Precision top-1/2/3 | MPJPE | Skate | Float | Penetrate | Clip.
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace dmc
