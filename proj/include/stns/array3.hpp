#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stns {

/// Dense 3D array with a uniform ghost padding on every side.
///
/// Indices run over [-ghost, n + ghost) per axis; x varies fastest in memory.
template <typename T>
class Array3 {
public:
    Array3() = default;

    Array3(std::array<int, 3> interior, int ghost, T fill = T{})
        : n_(interior), ghost_(ghost)
    {
        ext_ = {n_[0] + 2 * ghost_, n_[1] + 2 * ghost_, n_[2] + 2 * ghost_};
        sy_ = static_cast<std::ptrdiff_t>(ext_[0]);
        sz_ = sy_ * ext_[1];
        data_.assign(static_cast<std::size_t>(sz_ * ext_[2]), fill);
    }

    const std::array<int, 3>& interior() const noexcept { return n_; }
    int n(int axis) const noexcept { return n_[axis]; }
    int ghost() const noexcept { return ghost_; }

    /// Memory stride of one step along `axis`.
    std::ptrdiff_t stride(int axis) const noexcept
    {
        return axis == 0 ? 1 : (axis == 1 ? sy_ : sz_);
    }

    std::ptrdiff_t offset(int i, int j, int k) const noexcept
    {
        return (i + ghost_) + sy_ * (j + ghost_) + sz_ * (k + ghost_);
    }

    T& operator()(int i, int j, int k) noexcept { return data_[offset(i, j, k)]; }
    const T& operator()(int i, int j, int k) const noexcept { return data_[offset(i, j, k)]; }

    T& at(const std::array<int, 3>& idx) noexcept { return (*this)(idx[0], idx[1], idx[2]); }
    const T& at(const std::array<int, 3>& idx) const noexcept
    {
        return (*this)(idx[0], idx[1], idx[2]);
    }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> raw() noexcept { return data_; }
    std::span<const T> raw() const noexcept { return data_; }

    std::size_t interior_size() const noexcept
    {
        return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Array3& other) const noexcept
    {
        return n_ == other.n_ && ghost_ == other.ghost_;
    }

    bool operator==(const Array3& other) const = default;

private:
    std::array<int, 3> n_{};
    std::array<int, 3> ext_{};
    int ghost_ = 0;
    std::ptrdiff_t sy_ = 0;
    std::ptrdiff_t sz_ = 0;
    std::vector<T> data_;
};

using Field = Array3<double>;
using Mask = Array3<std::uint8_t>;

/// Visit every interior index of `a` with x innermost.
template <typename T, typename F>
void for_interior(const Array3<T>& a, F&& f)
{
    for (int k = 0; k < a.n(2); ++k)
        for (int j = 0; j < a.n(1); ++j)
            for (int i = 0; i < a.n(0); ++i)
                f(i, j, k);
}

} // namespace stns
