#include "hlab/grid.hpp"

#include "hlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace hlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool power_of_two(int m) { return m >= 2 && (m & (m - 1)) == 0; }

}  // namespace

// ---------------------------------------------------------------- expressions

double Expr::operator()(std::span<const double> x) const {
    double v = constant;
    for (const auto& mode : modes) {
        double phase = 0.0;
        for (std::size_t a = 0; a < mode.k.size() && a < x.size(); ++a) phase += mode.k[a] * x[a];
        phase *= kTwoPi;
        v += mode.amp * (mode.trig == FourierMode::Trig::Cos ? std::cos(phase) : std::sin(phase));
    }
    return v;
}

Expr Expr::derivative(int axis) const {
    Expr out;
    for (const auto& mode : modes) {
        const int ka = axis < static_cast<int>(mode.k.size()) ? mode.k[static_cast<std::size_t>(axis)] : 0;
        if (ka == 0) continue;
        FourierMode d = mode;
        // d/dx cos(2πkx) = −2πk sin, d/dx sin = 2πk cos
        if (mode.trig == FourierMode::Trig::Cos) {
            d.trig = FourierMode::Trig::Sin;
            d.amp = -kTwoPi * ka * mode.amp;
        } else {
            d.trig = FourierMode::Trig::Cos;
            d.amp = kTwoPi * ka * mode.amp;
        }
        out.modes.push_back(d);
    }
    return out;
}

int Expr::max_wavenumber() const {
    int w = 0;
    for (const auto& mode : modes)
        for (int k : mode.k) w = std::max(w, std::abs(k));
    return w;
}

// ---------------------------------------------------------------- grid

SpectralGrid::SpectralGrid(int n, int m) : n_(n), m_(m) {
    if (n < 2 || n > 3) throw Error(ErrorCode::InvalidArgument, "grid dimension must be 2 or 3");
    if (!power_of_two(m) || m > 128) throw Error(ErrorCode::InvalidArgument, "points per axis must be a power of two up to 128");
    const int d = 2 * n;
    size_ = 1;
    for (int a = 0; a < d; ++a) size_ *= static_cast<std::size_t>(m);
    if (size_ > (std::size_t{1} << 24)) throw Error(ErrorCode::InvalidArgument, "grid too large");
    half_size_ = size_ / static_cast<std::size_t>(m) * static_cast<std::size_t>(m / 2 + 1);
    stride_.assign(static_cast<std::size_t>(d), 1);
    for (int a = d - 2; a >= 0; --a) stride_[static_cast<std::size_t>(a)] = stride_[static_cast<std::size_t>(a + 1)] * static_cast<std::size_t>(m);

    wn_.assign(static_cast<std::size_t>(d), std::vector<std::int8_t>(size_));
    for (int a = 0; a < d; ++a)
        for (std::size_t p = 0; p < size_; ++p) wn_[static_cast<std::size_t>(a)][p] = static_cast<std::int8_t>(wavenumber(axis_index(p, a)));

    std::vector<int> dims(static_cast<std::size_t>(d), m);
    CField a(size_), b(size_);
    RField r(size_);
    fwd_ = fftw_plan_dft(d, dims.data(), reinterpret_cast<fftw_complex*>(a.data()), reinterpret_cast<fftw_complex*>(b.data()),
                         FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(d, dims.data(), reinterpret_cast<fftw_complex*>(a.data()), reinterpret_cast<fftw_complex*>(a.data()),
                         FFTW_BACKWARD, FFTW_ESTIMATE);
    r2c_ = fftw_plan_dft_r2c(d, dims.data(), r.data(), reinterpret_cast<fftw_complex*>(a.data()), FFTW_ESTIMATE);
    c2r_ = fftw_plan_dft_c2r(d, dims.data(), reinterpret_cast<fftw_complex*>(a.data()), r.data(), FFTW_ESTIMATE);
    if (!fwd_ || !bwd_ || !r2c_ || !c2r_) throw Error(ErrorCode::InvalidArgument, "FFTW planning failed");
}

SpectralGrid::~SpectralGrid() {
    for (auto p : {fwd_, bwd_, r2c_, c2r_})
        if (p) fftw_destroy_plan(p);
}

int SpectralGrid::axis_index(std::size_t p, int axis) const {
    return static_cast<int>((p / stride_[static_cast<std::size_t>(axis)]) % static_cast<std::size_t>(m_));
}

double SpectralGrid::coord(std::size_t p, int axis) const { return static_cast<double>(axis_index(p, axis)) / m_; }

int SpectralGrid::wavenumber(int j) const {
    if (2 * j == m_) return 0;
    return j < m_ / 2 ? j : j - m_;
}

CField SpectralGrid::sample(const Expr& e) const {
    CField out(size_);
    std::vector<double> x(static_cast<std::size_t>(2 * n_));
    for (std::size_t p = 0; p < size_; ++p) {
        for (int a = 0; a < 2 * n_; ++a) x[static_cast<std::size_t>(a)] = coord(p, a);
        out[p] = e(x);
    }
    return out;
}

RField SpectralGrid::sample_real(const Expr& e) const {
    RField out(size_);
    std::vector<double> x(static_cast<std::size_t>(2 * n_));
    for (std::size_t p = 0; p < size_; ++p) {
        for (int a = 0; a < 2 * n_; ++a) x[static_cast<std::size_t>(a)] = coord(p, a);
        out[p] = e(x);
    }
    return out;
}

CField SpectralGrid::forward(const CField& f) const {
    if (f.size() != size_) throw Error(ErrorCode::InvalidArgument, "field size does not match the grid");
    CField out(size_);
    fftw_execute_dft(fwd_, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(f.data())), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

void SpectralGrid::inverse_inplace(CField& spec) const {
    fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(spec.data()), reinterpret_cast<fftw_complex*>(spec.data()));
    const double scale = 1.0 / static_cast<double>(size_);
    for (auto& v : spec) v *= scale;
}

CField SpectralGrid::d(const CField& f, int index, bool conjugate) const {
    const CField spec = forward(f);
    return inverse_with(spec, [&](std::size_t p) { return symbol(p, index, conjugate); });
}

std::vector<CField> SpectralGrid::d_all(const CField& f, bool conjugate) const {
    const CField spec = forward(f);
    std::vector<CField> out;
    out.reserve(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) out.push_back(inverse_with(spec, [&](std::size_t p) { return symbol(p, i, conjugate); }));
    return out;
}

void SpectralGrid::r2c(const double* in, cplx* out) const {
    fftw_execute_dft_r2c(r2c_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void SpectralGrid::c2r(cplx* in, double* out) const { fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(in), out); }

int SpectralGrid::half_wavenumber(std::size_t p, int axis) const {
    const int d = 2 * n_;
    const std::size_t last = static_cast<std::size_t>(m_ / 2 + 1);
    if (axis == d - 1) {
        const int j = static_cast<int>(p % last);
        return 2 * j == m_ ? 0 : j;
    }
    std::size_t q = p / last;
    for (int a = d - 2; a > axis; --a) q /= static_cast<std::size_t>(m_);
    return wavenumber(static_cast<int>(q % static_cast<std::size_t>(m_)));
}

bool SpectralGrid::half_is_nyquist(std::size_t p, int axis) const {
    const int d = 2 * n_;
    const std::size_t last = static_cast<std::size_t>(m_ / 2 + 1);
    if (axis == d - 1) return 2 * static_cast<int>(p % last) == m_;
    std::size_t q = p / last;
    for (int a = d - 2; a > axis; --a) q /= static_cast<std::size_t>(m_);
    return 2 * static_cast<int>(q % static_cast<std::size_t>(m_)) == m_;
}

// ---------------------------------------------------------------- real fields

RealSpectral::RealSpectral(const SpectralGrid& grid) : grid_(&grid), buffer_(grid.half_size()) {
    const int d = grid.axes();
    const std::size_t H = grid.half_size();
    wn_.assign(static_cast<std::size_t>(d), std::vector<std::int8_t>(H));
    wn2_.assign(static_cast<std::size_t>(d), std::vector<std::int16_t>(H));
    const int nyq = grid.m() / 2;
    for (int a = 0; a < d; ++a)
        for (std::size_t q = 0; q < H; ++q) {
            const int k = grid.half_wavenumber(q, a);
            wn_[static_cast<std::size_t>(a)][q] = static_cast<std::int8_t>(k);
            wn2_[static_cast<std::size_t>(a)][q] = static_cast<std::int16_t>(grid.half_is_nyquist(q, a) ? nyq * nyq : k * k);
        }
}

CField RealSpectral::forward(const RField& f) const {
    if (f.size() != grid_->size()) throw Error(ErrorCode::InvalidArgument, "field size does not match the grid");
    CField out(half_size());
    grid_->r2c(f.data(), out.data());
    return out;
}

namespace {
constexpr double kPi = 3.14159265358979323846;
}

RField RealSpectral::axis_derivative(const CField& spec, int axis) const {
    const auto& k = wn_[static_cast<std::size_t>(axis)];
    return inverse_with(spec, [&](std::size_t q) { return cplx(0.0, 2.0 * kPi * k[q]); });
}

// ∂_j̄ ∂_i has symbol −π²(k_{x_i} − i k_{y_i})(k_{x_j} + i k_{y_j})
RField RealSpectral::ddbar_re(const CField& spec, int i, int j) const {
    if (i == j) {
        const auto &x2 = wn2_[static_cast<std::size_t>(2 * i)], &y2 = wn2_[static_cast<std::size_t>(2 * i + 1)];
        return inverse_with(spec, [&](std::size_t q) { return -kPi * kPi * (x2[q] + y2[q]); });
    }
    const auto &xi = wn_[static_cast<std::size_t>(2 * i)], &yi = wn_[static_cast<std::size_t>(2 * i + 1)];
    const auto &xj = wn_[static_cast<std::size_t>(2 * j)], &yj = wn_[static_cast<std::size_t>(2 * j + 1)];
    return inverse_with(spec, [&](std::size_t q) { return -kPi * kPi * (xi[q] * xj[q] + yi[q] * yj[q]); });
}

RField RealSpectral::ddbar_im(const CField& spec, int i, int j) const {
    const auto &xi = wn_[static_cast<std::size_t>(2 * i)], &yi = wn_[static_cast<std::size_t>(2 * i + 1)];
    const auto &xj = wn_[static_cast<std::size_t>(2 * j)], &yj = wn_[static_cast<std::size_t>(2 * j + 1)];
    return inverse_with(spec, [&](std::size_t q) { return -kPi * kPi * (xi[q] * yj[q] - yi[q] * xj[q]); });
}

RField RealSpectral::solve_laplacian(const CField& spec, double coeff) const {
    const int d = grid_->axes();
    return inverse_with(spec, [&](std::size_t q) {
        double k2 = 0.0;
        for (int a = 0; a < d; ++a) {
            k2 += wn2_[static_cast<std::size_t>(a)][q];
        }
        return k2 == 0.0 ? 0.0 : -1.0 / (coeff * kPi * kPi * k2);
    });
}

double max_abs(std::span<const cplx> f) {
    double v = 0.0;
    for (const auto& z : f) v = std::max(v, std::abs(z));
    return v;
}

double max_abs(const CField& f) { return max_abs(std::span<const cplx>(f.data(), f.size())); }

// ---------------------------------------------------------------- IO

namespace {

void check_components(const SpectralGrid& g, const std::vector<const CField*>& components) {
    if (components.empty()) throw Error(ErrorCode::InvalidArgument, "no components to write");
    for (auto* c : components)
        if (!c || c->size() != g.size()) throw Error(ErrorCode::InvalidArgument, "component size does not match the grid");
}

}  // namespace

void write_field_binary(std::ostream& os, const SpectralGrid& g, const std::vector<const CField*>& components) {
    check_components(g, components);
    os.write("HFLD", 4);
    const std::int32_t header[3] = {g.n(), g.m(), static_cast<std::int32_t>(components.size())};
    os.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (std::size_t p = 0; p < g.size(); ++p) {
        for (auto* c : components) {
            const double re = (*c)[p].real(), im = (*c)[p].imag();
            os.write(reinterpret_cast<const char*>(&re), sizeof(double));
            os.write(reinterpret_cast<const char*>(&im), sizeof(double));
        }
    }
}

void write_field_csv(std::ostream& os, const SpectralGrid& g, const std::vector<const CField*>& components) {
    check_components(g, components);
    os << "# n=" << g.n() << " m=" << g.m() << " components=" << components.size() << '\n';
    for (int a = 0; a < g.axes(); ++a) os << (a ? "," : "") << 'i' << a;
    for (std::size_t c = 0; c < components.size(); ++c) os << ",re" << c << ",im" << c;
    os << '\n';
    os.precision(17);
    for (std::size_t p = 0; p < g.size(); ++p) {
        for (int a = 0; a < g.axes(); ++a) os << (a ? "," : "") << g.axis_index(p, a);
        for (auto* c : components) os << ',' << (*c)[p].real() << ',' << (*c)[p].imag();
        os << '\n';
    }
}

FieldFile read_field_binary(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HFLD", 4) != 0) throw Error(ErrorCode::ConfigInvalid, "not a field file");
    std::int32_t header[3];
    if (!is.read(reinterpret_cast<char*>(header), sizeof(header))) throw Error(ErrorCode::ConfigInvalid, "truncated field header");
    FieldFile f{header[0], header[1], {}};
    if (f.n < 1 || f.n > 3 || f.m < 2 || header[2] < 1) throw Error(ErrorCode::ConfigInvalid, "bad field header");
    std::size_t size = 1;
    for (int a = 0; a < 2 * f.n; ++a) size *= static_cast<std::size_t>(f.m);
    f.components.assign(static_cast<std::size_t>(header[2]), CField(size));
    for (std::size_t p = 0; p < size; ++p) {
        for (auto& c : f.components) {
            double v[2];
            if (!is.read(reinterpret_cast<char*>(v), sizeof(v))) throw Error(ErrorCode::ConfigInvalid, "truncated field data");
            c[p] = cplx(v[0], v[1]);
        }
    }
    return f;
}

FieldFile read_field_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# n=", 0) != 0) throw Error(ErrorCode::ConfigInvalid, "missing field CSV header");
    FieldFile f;
    int comps = 0;
    if (std::sscanf(line.c_str(), "# n=%d m=%d components=%d", &f.n, &f.m, &comps) != 3 || f.n < 1 || f.n > 3 || comps < 1) {
        throw Error(ErrorCode::ConfigInvalid, "bad field CSV header");
    }
    std::getline(is, line);  // column names
    std::size_t size = 1;
    for (int a = 0; a < 2 * f.n; ++a) size *= static_cast<std::size_t>(f.m);
    f.components.assign(static_cast<std::size_t>(comps), CField(size));
    for (std::size_t p = 0; p < size; ++p) {
        if (!std::getline(is, line)) throw Error(ErrorCode::ConfigInvalid, "truncated field CSV");
        std::stringstream ss(line);
        std::string cell;
        for (int a = 0; a < 2 * f.n; ++a) std::getline(ss, cell, ',');
        for (auto& c : f.components) {
            std::string re, im;
            std::getline(ss, re, ',');
            std::getline(ss, im, ',');
            c[p] = cplx(std::stod(re), std::stod(im));
        }
    }
    return f;
}

}  // namespace hlab
