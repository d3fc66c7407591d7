#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmc/core/linalg.hpp"

namespace dmc {

/// Default condition width (normalised gait parameters, zero padded).
inline constexpr Index kConditionDim = 16;

struct Skeleton {
    std::vector<std::string> joint_names;
    std::array<int, 2> foot_indices{0, 0};  // (left, right)
    std::optional<std::vector<int>> parent;

    Index joint_count() const { return static_cast<Index>(joint_names.size()); }
    int left_foot() const { return foot_indices[0]; }
    int right_foot() const { return foot_indices[1]; }

    /// Seven-joint lower-body rig: pelvis, spine, head, knees, feet.
    static std::shared_ptr<const Skeleton> locomotion7();

    friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

/// Fixed-rate joint positions, Y-up, ground plane at y = 0, meters.
///
/// `frames` is T x 3J: row t holds (x, y, z) of every joint in skeleton
/// order, which is also the per-frame feature vector seen by the models.
struct MotionSequence {
    double fps = 20.0;
    Matrix frames;
    std::shared_ptr<const Skeleton> skeleton;

    Index frame_count() const { return frames.rows(); }
    Index joint_count() const { return frames.cols() / 3; }

    Eigen::Vector3d joint(Index t, Index j) const { return frames.row(t).segment<3>(3 * j).transpose(); }
    double height(Index t, Index j) const { return frames(t, 3 * j + 1); }

    /// Same skeleton and rate, new frames.
    MotionSequence with_frames(Matrix new_frames) const { return {fps, std::move(new_frames), skeleton}; }
};

struct ConditionVector {
    Vector values;

    Index size() const { return values.size(); }
};

enum class Provenance { clean, distorted, refined, generated };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct MotionRecord {
    MotionSequence motion;
    std::optional<ConditionVector> condition;
    std::optional<std::string> label;
    Provenance provenance = Provenance::clean;
};

using Corpus = std::vector<MotionRecord>;

struct Violation {
    std::string field;
    std::string rule;
};

std::vector<Violation> validate(const Skeleton& skeleton);
std::vector<Violation> validate(const MotionSequence& motion);

/// Checks every record invariant. `condition_dim` pins the expected d_e; pass
/// std::nullopt to accept any width.
std::vector<Violation> validate(const MotionRecord& record,
                                std::optional<Index> condition_dim = kConditionDim);

/// Record-level checks plus condition-width consistency across the corpus.
std::vector<Violation> validate(std::span<const MotionRecord> corpus,
                                std::optional<Index> condition_dim = kConditionDim);

/// Throws ValidationError listing every violation, if any.
void require_valid(const MotionRecord& record, std::optional<Index> condition_dim = kConditionDim);

std::string describe(const std::vector<Violation>& violations);

}  // namespace dmc
