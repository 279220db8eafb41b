#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace entpick {

/// Row-major 2D array indexed (x, y) with x the fast axis.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int nx, int ny, T fill = T{})
        : nx_(nx), ny_(ny), data_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), fill) {
        if (nx < 0 || ny < 0) throw std::invalid_argument("Grid: negative dimension");
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < nx_ && y < ny_; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x);
    }

    int nx_ = 0;
    int ny_ = 0;
    std::vector<T> data_;
};

}  // namespace entpick
