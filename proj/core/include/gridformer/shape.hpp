#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "gridformer/errors.hpp"

namespace gridformer {

// Dense extents, rank 1..4, row-major layout.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int64_t> dims) {
        if (dims.size() < 1 || dims.size() > 4)
            throw ShapeError("shape rank must be in [1,4], got " + std::to_string(dims.size()));
        rank_ = static_cast<int>(dims.size());
        int i = 0;
        for (int64_t d : dims) {
            if (d <= 0) throw ShapeError("shape extents must be positive, got " + std::to_string(d));
            d_[i++] = d;
        }
    }

    int rank() const { return rank_; }
    int64_t operator[](int i) const { return d_[i]; }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank_; ++i) n *= d_[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (d_[i] != o.d_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += ",";
            s += std::to_string(d_[i]);
        }
        return s + "]";
    }

private:
    int rank_ = 0;
    std::array<int64_t, 4> d_{1, 1, 1, 1};
};

}  // namespace gridformer
