#pragma once

// Value-type image grids. Layout is row-major with interleaved channels:
// v[(y*w + x)*c + ch].

#include <vector>

#include "jointflow/rng.hpp"
#include "jointflow/tensor.hpp"

namespace jointflow {

template <typename T = float>
struct Grid {
    int h = 0;
    int w = 0;
    int c = 1;
    std::vector<T> v;

    Grid() = default;
    Grid(int h_, int w_, int c_ = 1)
        : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, T(0)) {}

    std::size_t size() const { return v.size(); }

    T& at(int y, int x, int ch = 0) { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    const T& at(int y, int x, int ch = 0) const {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    bool same_shape(const Grid& o) const { return h == o.h && w == o.w && c == o.c; }
};

using GridF = Grid<float>;

// A coupled sample: rgb in [0,1] (3 channels) and disparity in [0,1].
struct ModalityPair {
    GridF rgb;        // h x w x 3
    GridF disparity;  // h x w x 1
    int class_id = 0;
};

template <typename T>
Grid<T> randn_grid(Rng& rng, int h, int w, int c) {
    Grid<T> g(h, w, c);
    for (auto& x : g.v) x = static_cast<T>(rng.normal());
    return g;
}

}  // namespace jointflow
