#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "reebflow/common.hpp"

namespace reebflow {

/**
 * Analytic scalar field H on a bounding box, with exact gradient and Hessian.
 *
 * The box plays the role of a numerical horizon: all dynamics live below the
 * ceiling z_ceiling, which must be smaller than the minimum of H over the box
 * boundary so that level sets below the ceiling never touch the boundary.
 * Fields are immutable after construction and safe to share across threads.
 */
class ScalarField {
public:
    virtual ~ScalarField() = default;

    virtual double value(const Vec& x) const = 0;
    virtual void gradient(const Vec& x, Vec& g) const = 0;
    virtual void hessian(const Vec& x, Mat& h) const = 0;

    int dim() const { return dim_; }
    const Box& box() const { return box_; }
    double z_ceiling() const { return z_ceiling_; }
    const std::string& name() const { return name_; }

    /// Set for H(p,q) = |p|^2/2 + F(q); p_dim() momenta come first in x.
    bool is_separable() const { return potential_ != nullptr; }
    int p_dim() const { return p_dim_; }
    const std::shared_ptr<const ScalarField>& potential() const { return potential_; }

    Vec grad(const Vec& x) const {
        Vec g(dim_);
        gradient(x, g);
        return g;
    }
    Mat hess(const Vec& x) const {
        Mat h(dim_, dim_);
        hessian(x, h);
        return h;
    }

    /// Laplacian; ubiquitous because div(grad H) shows up in every averaged
    /// coefficient with identity diffusion.
    double laplacian(const Vec& x) const { return hess(x).trace(); }

protected:
    ScalarField(int dim, Box box, double z_ceiling, std::string name)
        : dim_(dim), box_(std::move(box)), z_ceiling_(z_ceiling), name_(std::move(name)) {}

    void set_separable(int p_dim, std::shared_ptr<const ScalarField> potential) {
        p_dim_ = p_dim;
        potential_ = std::move(potential);
    }

private:
    int dim_;
    Box box_;
    double z_ceiling_;
    std::string name_;
    int p_dim_ = 0;
    std::shared_ptr<const ScalarField> potential_;
};

namespace detail {
inline Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    Box b;
    b.lo.resize(static_cast<int>(lo.size()));
    b.hi.resize(static_cast<int>(hi.size()));
    int i = 0;
    for (double v : lo) b.lo[i++] = v;
    i = 0;
    for (double v : hi) b.hi[i++] = v;
    return b;
}
}  // namespace detail

/// H(x) = |x|^2 / 2.
class HarmonicField final : public ScalarField {
public:
    explicit HarmonicField(int dim = 2, double half_width = 3.0, double z_ceiling = 2.0)
        : ScalarField(dim, square_box(dim, half_width), z_ceiling, "harmonic") {}

    double value(const Vec& x) const override { return 0.5 * x.squaredNorm(); }
    void gradient(const Vec& x, Vec& g) const override { g = x; }
    void hessian(const Vec& x, Mat& h) const override {
        h.setIdentity(x.size(), x.size());
    }

private:
    static Box square_box(int dim, double w) {
        Box b;
        b.lo = Vec::Constant(dim, -w);
        b.hi = Vec::Constant(dim, w);
        return b;
    }
};

/// F(q) = q^4/4 - q^2/2 + c q, the tilted 1-D double well.
class DoubleWell1D final : public ScalarField {
public:
    explicit DoubleWell1D(double c = 0.0)
        : ScalarField(1, detail::make_box({-2.1}, {2.1}), 2.0, "doublewell1d_potential"), c_(c) {}

    double value(const Vec& x) const override {
        double q = x[0];
        return 0.25 * q * q * q * q - 0.5 * q * q + c_ * q;
    }
    void gradient(const Vec& x, Vec& g) const override {
        double q = x[0];
        g.resize(1);
        g[0] = q * q * q - q + c_;
    }
    void hessian(const Vec& x, Mat& h) const override {
        double q = x[0];
        h.resize(1, 1);
        h(0, 0) = 3.0 * q * q - 1.0;
    }
    double tilt() const { return c_; }

private:
    double c_;
};

/// F(q1,q2) = (q1^2-1)^2 + 5 q2^2 + c q1.
class DoubleWell2D final : public ScalarField {
public:
    explicit DoubleWell2D(double c = 0.0)
        : ScalarField(2, detail::make_box({-1.7, -0.8}, {1.7, 0.8}), 2.5, "doublewell2d"), c_(c) {}

    double value(const Vec& x) const override {
        double a = x[0] * x[0] - 1.0;
        return a * a + 5.0 * x[1] * x[1] + c_ * x[0];
    }
    void gradient(const Vec& x, Vec& g) const override {
        g.resize(2);
        g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) + c_;
        g[1] = 10.0 * x[1];
    }
    void hessian(const Vec& x, Mat& h) const override {
        h.setZero(2, 2);
        h(0, 0) = 12.0 * x[0] * x[0] - 4.0;
        h(1, 1) = 10.0;
    }
    double tilt() const { return c_; }

private:
    double c_;
};

/// H(p,q) = |p|^2/2 + F(q) with p first in the state vector.
class SeparableHamiltonian final : public ScalarField {
public:
    SeparableHamiltonian(std::shared_ptr<const ScalarField> potential, int p_dim,
                         Vec p_halfwidth, double z_ceiling, std::string name)
        : ScalarField(p_dim + potential->dim(),
                      joined_box(*potential, p_dim, p_halfwidth),
                      z_ceiling, std::move(name)) {
        set_separable(p_dim, std::move(potential));
    }

    double value(const Vec& x) const override {
        double k = 0.5 * x.head(p_dim()).squaredNorm();
        return k + potential()->value(Vec(x.tail(q_dim())));
    }
    void gradient(const Vec& x, Vec& g) const override {
        g.resize(dim());
        g.head(p_dim()) = x.head(p_dim());
        Vec gq(q_dim());
        potential()->gradient(Vec(x.tail(q_dim())), gq);
        g.tail(q_dim()) = gq;
    }
    void hessian(const Vec& x, Mat& h) const override {
        h.setZero(dim(), dim());
        for (int i = 0; i < p_dim(); ++i) h(i, i) = 1.0;
        Mat hq(q_dim(), q_dim());
        potential()->hessian(Vec(x.tail(q_dim())), hq);
        h.bottomRightCorner(q_dim(), q_dim()) = hq;
    }

    int q_dim() const { return potential()->dim(); }

private:
    static Box joined_box(const ScalarField& f, int p_dim, const Vec& p_halfwidth) {
        Box b;
        int d = p_dim + f.dim();
        b.lo.resize(d);
        b.hi.resize(d);
        for (int i = 0; i < p_dim; ++i) {
            b.lo[i] = -p_halfwidth[i];
            b.hi[i] = p_halfwidth[i];
        }
        b.lo.tail(f.dim()) = f.box().lo;
        b.hi.tail(f.dim()) = f.box().hi;
        return b;
    }
};

/// Field defined by closures; mainly for tests and one-off inputs.
class FunctionField final : public ScalarField {
public:
    using ValueFn = std::function<double(const Vec&)>;
    using GradFn = std::function<void(const Vec&, Vec&)>;
    using HessFn = std::function<void(const Vec&, Mat&)>;

    FunctionField(int dim, Box box, double z_ceiling, std::string name,
                  ValueFn v, GradFn g, HessFn h)
        : ScalarField(dim, std::move(box), z_ceiling, std::move(name)),
          v_(std::move(v)), g_(std::move(g)), h_(std::move(h)) {}

    double value(const Vec& x) const override { return v_(x); }
    void gradient(const Vec& x, Vec& g) const override { g_(x, g); }
    void hessian(const Vec& x, Mat& h) const override { h_(x, h); }

private:
    ValueFn v_;
    GradFn g_;
    HessFn h_;
};

/// Built-in field catalog addressable by name from configs.
inline std::shared_ptr<const ScalarField> make_field(const std::string& name, double c = 0.0) {
    if (name == "harmonic") return std::make_shared<HarmonicField>(2);
    if (name == "doublewell1d" || name == "doublewell1d_tilted") {
        double tilt = (name == "doublewell1d") ? 0.0 : c;
        auto f = std::make_shared<DoubleWell1D>(tilt);
        Vec pw(1);
        pw[0] = 2.5;
        return std::make_shared<SeparableHamiltonian>(f, 1, pw, 1.5, name);
    }
    if (name == "doublewell2d") return std::make_shared<DoubleWell2D>(c);
    if (name == "sep4d") {
        auto f = std::make_shared<DoubleWell2D>(c);
        Vec pw(2);
        pw[0] = pw[1] = 2.4;
        return std::make_shared<SeparableHamiltonian>(f, 2, pw, 2.5, "sep4d");
    }
    throw ConfigInvalid("unknown field name '" + name + "'");
}

// ---------------------------------------------------------------------------
// Drift fields b, beta.

class VectorField {
public:
    virtual ~VectorField() = default;
    virtual void value(const Vec& x, Vec& out) const = 0;
    virtual double divergence(const Vec& x) const = 0;
};

class ZeroField final : public VectorField {
public:
    void value(const Vec& x, Vec& out) const override { out.setZero(x.size()); }
    double divergence(const Vec&) const override { return 0.0; }
};

/// b = (-lambda p, 0) acting on the first p_dim components.
class MomentumDrag final : public VectorField {
public:
    MomentumDrag(double lambda, int p_dim) : lambda_(lambda), p_dim_(p_dim) {}

    void value(const Vec& x, Vec& out) const override {
        out.setZero(x.size());
        out.head(p_dim_) = -lambda_ * x.head(p_dim_);
    }
    double divergence(const Vec&) const override { return -lambda_ * p_dim_; }
    double lambda() const { return lambda_; }

private:
    double lambda_;
    int p_dim_;
};

/// b = -lambda x.
class RadialContraction final : public VectorField {
public:
    explicit RadialContraction(double lambda) : lambda_(lambda) {}

    void value(const Vec& x, Vec& out) const override { out = -lambda_ * x; }
    double divergence(const Vec& x) const override {
        return -lambda_ * static_cast<double>(x.size());
    }

private:
    double lambda_;
};

class ConstantField final : public VectorField {
public:
    explicit ConstantField(Vec v) : v_(std::move(v)) {}
    void value(const Vec&, Vec& out) const override { out = v_; }
    double divergence(const Vec&) const override { return 0.0; }

private:
    Vec v_;
};

// ---------------------------------------------------------------------------
// Diffusion matrix a(x) with square root and Ito correction.

class MatrixModel {
public:
    virtual ~MatrixModel() = default;
    virtual void value(const Vec& x, Mat& a) const = 0;
    virtual void sqrt_value(const Vec& x, Mat& s) const = 0;
    /// Row divergence: out_k = sum_i d a_ik / d x_i.
    virtual void row_divergence(const Vec& x, Vec& out) const = 0;

    /// div(a grad H)(x) = a : Hess H + row_divergence . grad H.
    double div_a_grad(const ScalarField& f, const Vec& x) const {
        Mat a(f.dim(), f.dim());
        value(x, a);
        Mat h = f.hess(x);
        Vec rd(f.dim());
        row_divergence(x, rd);
        return a.cwiseProduct(h).sum() + rd.dot(f.grad(x));
    }
};

class ConstantMatrixModel final : public MatrixModel {
public:
    explicit ConstantMatrixModel(Mat a) : a_(std::move(a)) {
        Eigen::LLT<Mat> llt(a_);
        if (llt.info() != Eigen::Success)
            throw DegenerateDiffusion("constant diffusion matrix is not positive definite");
        sqrt_ = llt.matrixL();
    }

    static std::shared_ptr<const ConstantMatrixModel> identity(int dim) {
        Mat a = Mat::Identity(dim, dim);
        return std::make_shared<ConstantMatrixModel>(a);
    }

    void value(const Vec&, Mat& a) const override { a = a_; }
    void sqrt_value(const Vec&, Mat& s) const override { s = sqrt_; }
    void row_divergence(const Vec& x, Vec& out) const override { out.setZero(x.size()); }

private:
    Mat a_;
    Mat sqrt_;
};

}  // namespace reebflow
