#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dmc/core/linalg.hpp"
#include "dmc/errors.hpp"

namespace dmc::nn {

struct ParameterSpec {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    Index offset = 0;

    Index size() const { return rows * cols; }
    friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

/// Named row-major blocks packed into one flat vector, in insertion order.
class ParameterLayout {
public:
    void add(std::string name, Index rows, Index cols) {
        if (index_.count(name)) throw UsageError("duplicate parameter '" + name + "'");
        index_.emplace(name, entries_.size());
        entries_.push_back({std::move(name), rows, cols, size_});
        size_ += rows * cols;
    }

    const ParameterSpec& at(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
        return entries_[it->second];
    }

    bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }
    const std::vector<ParameterSpec>& entries() const { return entries_; }
    Index size() const { return size_; }

    friend bool operator==(const ParameterLayout& a, const ParameterLayout& b) { return a.entries_ == b.entries_; }

private:
    std::vector<ParameterSpec> entries_;
    std::map<std::string, std::size_t> index_;
    Index size_ = 0;
};

/// Flat parameter (or gradient) storage with named matrix views.
template <typename Scalar>
class Parameters {
public:
    using Block = Eigen::Map<MatX<Scalar>>;
    using ConstBlock = Eigen::Map<const MatX<Scalar>>;

    Parameters() = default;
    explicit Parameters(std::shared_ptr<const ParameterLayout> layout)
        : layout_(std::move(layout)), values_(VecX<Scalar>::Zero(layout_->size())) {}
    Parameters(std::shared_ptr<const ParameterLayout> layout, VecX<Scalar> values)
        : layout_(std::move(layout)), values_(std::move(values)) {
        if (values_.size() != layout_->size()) throw ShapeError("parameter vector does not match its layout");
    }

    Block operator[](std::string_view name) {
        const auto& s = layout_->at(name);
        return Block(values_.data() + s.offset, s.rows, s.cols);
    }
    ConstBlock operator[](std::string_view name) const {
        const auto& s = layout_->at(name);
        return ConstBlock(values_.data() + s.offset, s.rows, s.cols);
    }

    /// Same layout, zero values.
    Parameters zeros_like() const { return Parameters(layout_); }

    template <typename Other>
    Parameters<Other> cast() const {
        return Parameters<Other>(layout_, values_.template cast<Other>());
    }

    const ParameterLayout& layout() const { return *layout_; }
    const std::shared_ptr<const ParameterLayout>& layout_ptr() const { return layout_; }
    VecX<Scalar>& values() { return values_; }
    const VecX<Scalar>& values() const { return values_; }
    Index size() const { return values_.size(); }

private:
    std::shared_ptr<const ParameterLayout> layout_;
    VecX<Scalar> values_;
};

}  // namespace dmc::nn
