#pragma once

// Periodic grid on the complex torus ℂⁿ/(ℤⁿ + iℤⁿ) with Fourier differentiation.
// Real axes are ordered (x_1, y_1, x_2, y_2, …), each of period 1, and grid
// points are stored row-major over the axes (the first axis varies slowest).

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hlab {

using cplx = std::complex<double>;

/// Allocator that hands out FFTW-aligned memory so plans can be reused.
template <class T>
struct FftwAllocator {
    using value_type = T;
    FftwAllocator() = default;
    template <class U>
    FftwAllocator(const FftwAllocator<U>&) noexcept {}
    T* allocate(std::size_t count) {
        void* p = fftw_malloc(count * sizeof(T));
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }
    template <class U>
    bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

using CField = std::vector<cplx, FftwAllocator<cplx>>;
using RField = std::vector<double, FftwAllocator<double>>;

/// Sum of Fourier modes amp·trig(2π k·x) plus a constant; k has one entry per real axis.
struct FourierMode {
    enum class Trig { Cos, Sin };
    double amp = 0.0;
    Trig trig = Trig::Cos;
    std::vector<int> k;
};

struct Expr {
    double constant = 0.0;
    std::vector<FourierMode> modes;

    double operator()(std::span<const double> x) const;
    /// Exact derivative along real axis a.
    Expr derivative(int axis) const;
    int max_wavenumber() const;
};

class SpectralGrid {
public:
    SpectralGrid(int n, int m);
    ~SpectralGrid();
    SpectralGrid(const SpectralGrid&) = delete;
    SpectralGrid& operator=(const SpectralGrid&) = delete;

    int n() const noexcept { return n_; }
    int m() const noexcept { return m_; }
    int axes() const noexcept { return 2 * n_; }
    std::size_t size() const noexcept { return size_; }

    /// Grid coordinate of point p along real axis a, in [0, 1).
    double coord(std::size_t p, int axis) const;
    /// Index of point p along axis a.
    int axis_index(std::size_t p, int axis) const;
    /// Signed wavenumber for index j, with the Nyquist mode mapped to zero.
    int wavenumber(int j) const;

    CField sample(const Expr& e) const;
    RField sample_real(const Expr& e) const;

    /// Unnormalized forward transform.
    CField forward(const CField& f) const;
    /// Inverse transform of spec·mult, normalized, where mult(p) is the
    /// multiplier at spectral index p.
    template <class Mult>
    CField inverse_with(const CField& spec, Mult mult) const;

    /// ∂_i (conjugate = false) or ∂_ī (conjugate = true) of a complex field.
    CField d(const CField& f, int index, bool conjugate) const;
    /// All n holomorphic (or antiholomorphic) derivatives, sharing one forward transform.
    std::vector<CField> d_all(const CField& f, bool conjugate) const;
    /// Fourier multiplier of ∂_i or ∂_ī at spectral index p.
    cplx symbol(std::size_t p, int index, bool conjugate) const {
        const double kx = wn_[static_cast<std::size_t>(2 * index)][p];
        const double ky = wn_[static_cast<std::size_t>(2 * index + 1)][p];
        // ∂_x → 2πi k_x, ∂_y → 2πi k_y; ∂ = (∂_x ∓ i∂_y)/2
        return conjugate ? cplx(-kPi * ky, kPi * kx) : cplx(kPi * ky, kPi * kx);
    }
    /// Signed wavenumber (Nyquist mapped to zero) along axis a at spectral index p.
    int wave(std::size_t p, int axis) const { return wn_[static_cast<std::size_t>(axis)][p]; }

    // Real-to-complex transforms over the full grid (last axis halved).
    std::size_t half_size() const noexcept { return half_size_; }
    void r2c(const double* in, cplx* out) const;
    void c2r(cplx* in, double* out) const;  // destroys in
    /// Wavenumber along axis a for index p of the half spectrum.
    int half_wavenumber(std::size_t p, int axis) const;
    bool half_is_nyquist(std::size_t p, int axis) const;

    void inverse_inplace(CField& spec) const;

private:
    int n_, m_;
    std::size_t size_, half_size_;
    std::vector<std::size_t> stride_;
    std::vector<std::vector<std::int8_t>> wn_;
    static constexpr double kPi = 3.14159265358979323846;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr, r2c_ = nullptr, c2r_ = nullptr;
};

template <class Mult>
CField SpectralGrid::inverse_with(const CField& spec, Mult mult) const {
    CField out(size_);
    const double scale = 1.0 / static_cast<double>(size_);
    for (std::size_t p = 0; p < size_; ++p) out[p] = spec[p] * (mult(p) * scale);
    fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(out.data()), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

/// Derivatives of real fields through the half spectrum of the real transform.
/// Holds scratch buffers, so one instance must not be shared across threads.
class RealSpectral {
public:
    explicit RealSpectral(const SpectralGrid& grid);

    const SpectralGrid& grid() const { return *grid_; }
    std::size_t half_size() const noexcept { return grid_->half_size(); }
    /// Signed wavenumber along axis a at half-spectrum index q (Nyquist mapped to zero).
    int wave(std::size_t q, int axis) const { return wn_[static_cast<std::size_t>(axis)][q]; }

    /// Unnormalized half spectrum.
    CField forward(const RField& f) const;
    /// Normalized inverse of spec·mult(q).
    template <class Mult>
    RField inverse_with(const CField& spec, Mult mult) const;

    /// ∂/∂x_a along real axis a.
    RField axis_derivative(const CField& spec, int axis) const;
    /// Real and imaginary parts of ∂_j̄ ∂_i f. Pure second derivatives keep the
    /// Nyquist mode, so the diagonal terms and the Laplacian are invertible on
    /// every non-constant mode.
    RField ddbar_re(const CField& spec, int i, int j) const;
    RField ddbar_im(const CField& spec, int i, int j) const;
    /// Mean-zero v with coeff·Σ_i ∂_i ∂_ī v = f − mean f.
    RField solve_laplacian(const CField& spec, double coeff) const;

private:
    const SpectralGrid* grid_;
    std::vector<std::vector<std::int8_t>> wn_;
    std::vector<std::vector<std::int16_t>> wn2_;  // k² with the Nyquist mode kept
    mutable CField buffer_;
};

template <class Mult>
RField RealSpectral::inverse_with(const CField& spec, Mult mult) const {
    const std::size_t H = half_size();
    const double scale = 1.0 / static_cast<double>(grid_->size());
    for (std::size_t q = 0; q < H; ++q) buffer_[q] = spec[q] * (mult(q) * scale);
    RField out(grid_->size());
    grid_->c2r(buffer_.data(), out.data());
    return out;
}

double max_abs(const CField& f);
double max_abs(std::span<const cplx> f);

// ---------------------------------------------------------------- field IO
//
// Layout: one record per grid point in row-major axis order; each record holds
// `components` complex matrix entries in row-major order, real part first.
// Binary files start with the magic "HFLD", then int32 n, m, components.

void write_field_binary(std::ostream& os, const SpectralGrid& g, const std::vector<const CField*>& components);
void write_field_csv(std::ostream& os, const SpectralGrid& g, const std::vector<const CField*>& components);

struct FieldFile {
    int n = 0;
    int m = 0;
    std::vector<CField> components;
};

FieldFile read_field_binary(std::istream& is);
FieldFile read_field_csv(std::istream& is);

}  // namespace hlab
