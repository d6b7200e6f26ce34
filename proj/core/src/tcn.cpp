#include "synthmarket/tcn.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "synthmarket/errors.hpp"

namespace synthmarket {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kMomentum = 0.9;
constexpr double kPreluInit = 0.25;

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

ConstMatMap tap(const Eigen::VectorXd& p, const Tcn::ConvLayer& c, int j) {
    return ConstMatMap(p.data() + c.offset + static_cast<Eigen::Index>(j) * c.cout * c.cin, c.cout, c.cin);
}

MatMap tap(Eigen::VectorXd& p, const Tcn::ConvLayer& c, int j) {
    return MatMap(p.data() + c.offset + static_cast<Eigen::Index>(j) * c.cout * c.cin, c.cout, c.cin);
}

Eigen::Index bias_offset(const Tcn::ConvLayer& c) {
    return c.offset + static_cast<Eigen::Index>(c.kernel) * c.cout * c.cin;
}

Eigen::Index shrink(const Tcn::ConvLayer& c) { return static_cast<Eigen::Index>(c.dilation) * (c.kernel - 1); }

Eigen::MatrixXd conv_forward(const Eigen::VectorXd& p, const Tcn::ConvLayer& c, const Eigen::MatrixXd& x,
                             Eigen::Index batch) {
    const Eigen::Index l_out = x.cols() / batch - shrink(c);
    Eigen::MatrixXd out(c.cout, l_out * batch);
    out.colwise() = p.segment(bias_offset(c), c.cout);
    for (int j = 0; j < c.kernel; ++j) {
        out.noalias() += tap(p, c, j) * x.middleCols(static_cast<Eigen::Index>(j) * c.dilation * batch, l_out * batch);
    }
    return out;
}

// grad may be null when only the input gradient is wanted.
Eigen::MatrixXd conv_backward(const Eigen::VectorXd& p, const Tcn::ConvLayer& c, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& d_out, Eigen::Index batch, Eigen::VectorXd* grad) {
    const Eigen::Index l_out = d_out.cols() / batch;
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(c.cin, x.cols());
    for (int j = 0; j < c.kernel; ++j) {
        const Eigen::Index start = static_cast<Eigen::Index>(j) * c.dilation * batch;
        if (grad != nullptr) tap(*grad, c, j).noalias() += d_out * x.middleCols(start, l_out * batch).transpose();
        dx.middleCols(start, l_out * batch).noalias() += tap(p, c, j).transpose() * d_out;
    }
    if (grad != nullptr) grad->segment(bias_offset(c), c.cout) += d_out.rowwise().sum();
    return dx;
}

Eigen::MatrixXd prelu(const Eigen::MatrixXd& a, double slope) {
    return a.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Eigen::MatrixXd prelu_backward(const Eigen::MatrixXd& a, const Eigen::MatrixXd& dy, double slope, double& d_slope) {
    Eigen::MatrixXd dx(a.rows(), a.cols());
    double acc = 0.0;
    const Eigen::Index n = a.size();
    const double* av = a.data();
    const double* dv = dy.data();
    double* out = dx.data();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (av[i] > 0.0) {
            out[i] = dv[i];
        } else {
            out[i] = slope * dv[i];
            acc += av[i] * dv[i];
        }
    }
    d_slope += acc;
    return dx;
}

Eigen::MatrixXd norm_forward(const Eigen::VectorXd& p, const Tcn::NormLayer& nl, const Eigen::MatrixXd& z,
                             Tcn::Mode mode, Tcn::Cache::Norm* cache, Eigen::VectorXd* state,
                             const Eigen::VectorXd& frozen_state) {
    const int c = nl.channels;
    const auto gamma = p.segment(nl.offset, c);
    const auto beta = p.segment(nl.offset + c, c);
    Eigen::VectorXd mean, var;
    if (mode == Tcn::Mode::train) {
        mean = z.rowwise().mean();
        var = (z.colwise() - mean).array().square().rowwise().mean();
        if (state != nullptr) {
            state->segment(nl.state, c) = kMomentum * state->segment(nl.state, c) + (1.0 - kMomentum) * mean;
            state->segment(nl.state + c, c) = kMomentum * state->segment(nl.state + c, c) + (1.0 - kMomentum) * var;
        }
    } else {
        mean = frozen_state.segment(nl.state, c);
        var = frozen_state.segment(nl.state + c, c);
    }
    const Eigen::VectorXd inv_std = (var.array() + kNormEps).rsqrt();
    Eigen::MatrixXd xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    Eigen::MatrixXd y = (xhat.array().colwise() * gamma.array()).colwise() + beta.array();
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = inv_std;
    }
    return y;
}

Eigen::MatrixXd norm_backward(const Eigen::VectorXd& p, const Tcn::NormLayer& nl, const Tcn::Cache::Norm& cache,
                              const Eigen::MatrixXd& dy, Eigen::VectorXd* grad) {
    const int c = nl.channels;
    const auto gamma = p.segment(nl.offset, c);
    const double n = static_cast<double>(dy.cols());
    if (grad != nullptr) {
        grad->segment(nl.offset, c) += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
        grad->segment(nl.offset + c, c) += dy.rowwise().sum();
    }
    const Eigen::ArrayXXd dxhat = dy.array().colwise() * gamma.array();
    const Eigen::ArrayXd sum_dxhat = dxhat.rowwise().sum();
    const Eigen::ArrayXd sum_dxhat_xhat = (dxhat * cache.xhat.array()).rowwise().sum();
    Eigen::ArrayXXd dx = (n * dxhat).colwise() - sum_dxhat;
    dx -= cache.xhat.array().colwise() * sum_dxhat_xhat;
    dx.colwise() *= cache.inv_std.array() / n;
    return dx.matrix();
}

}  // namespace

TcnSpec TcnSpec::generator(int width) {
    TcnSpec s;
    s.in_channels = 3;
    s.out_channels = 1;
    s.width = width;
    s.batch_norm = true;
    return s;
}

TcnSpec TcnSpec::discriminator(int width) {
    TcnSpec s;
    s.in_channels = 1;
    s.out_channels = 1;
    s.width = width;
    s.batch_norm = false;
    return s;
}

int TcnSpec::receptive_field() const {
    int rf = 1;
    for (std::size_t i = 0; i < dilations.size(); ++i) rf += 2 * dilations[i] * (kernels[i] - 1);
    return rf;
}

void TcnSpec::validate() const {
    if (in_channels < 1 || out_channels < 1 || width < 1) throw InputError("TcnSpec: channel counts must be positive");
    if (dilations.empty() || dilations.size() != kernels.size()) {
        throw InputError("TcnSpec: dilations and kernels must be nonempty and of equal length");
    }
    for (std::size_t i = 0; i < dilations.size(); ++i) {
        if (dilations[i] < 1 || kernels[i] < 1) throw InputError("TcnSpec: dilations and kernels must be positive");
    }
}

nlohmann::json to_json(const TcnSpec& spec) {
    return {{"in_channels", spec.in_channels}, {"out_channels", spec.out_channels}, {"width", spec.width},
            {"dilations", spec.dilations},     {"kernels", spec.kernels},           {"batch_norm", spec.batch_norm}};
}

TcnSpec tcn_spec_from_json(const nlohmann::json& j) {
    TcnSpec s;
    s.in_channels = j.at("in_channels").get<int>();
    s.out_channels = j.at("out_channels").get<int>();
    s.width = j.at("width").get<int>();
    s.dilations = j.at("dilations").get<std::vector<int>>();
    s.kernels = j.at("kernels").get<std::vector<int>>();
    s.batch_norm = j.at("batch_norm").get<bool>();
    s.validate();
    return s;
}

Tcn::Tcn(TcnSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Eigen::Index offset = 0;
    Eigen::Index state = 0;
    auto conv = [&](int cin, int cout, int k, int d) {
        ConvLayer c{offset, cin, cout, k, d};
        offset += c.size();
        return c;
    };
    auto norm = [&](int channels) {
        NormLayer n;
        n.channels = channels;
        if (spec_.batch_norm) {
            n.offset = offset;
            n.state = state;
            offset += 2 * channels;
            state += 2 * channels;
        }
        return n;
    };
    int cin = spec_.in_channels;
    for (int b = 0; b < spec_.blocks(); ++b) {
        Block blk;
        const int k = spec_.kernels[static_cast<std::size_t>(b)];
        const int d = spec_.dilations[static_cast<std::size_t>(b)];
        blk.conv1 = conv(cin, spec_.width, k, d);
        blk.norm1 = norm(spec_.width);
        blk.prelu1 = offset++;
        blk.conv2 = conv(spec_.width, spec_.width, k, d);
        blk.norm2 = norm(spec_.width);
        blk.prelu2 = offset++;
        blk.has_residual_conv = cin != spec_.width;
        if (blk.has_residual_conv) blk.residual = conv(cin, spec_.width, 1, 1);
        blocks_.push_back(blk);
        cin = spec_.width;
    }
    output_ = conv(spec_.width, spec_.out_channels, 1, 1);
    params_ = Eigen::VectorXd::Zero(offset);
    state_ = Eigen::VectorXd::Zero(state);
    for (const auto& blk : blocks_) {
        for (const NormLayer* n : {&blk.norm1, &blk.norm2}) {
            if (n->offset >= 0) {
                params_.segment(n->offset, n->channels).setOnes();
                state_.segment(n->state + n->channels, n->channels).setOnes();
            }
        }
        params_(blk.prelu1) = kPreluInit;
        params_(blk.prelu2) = kPreluInit;
    }
}

void Tcn::initialize(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](const ConvLayer& c) {
        const double sd = std::sqrt(2.0 / (static_cast<double>(c.cin) * c.kernel));
        const Eigen::Index nw = static_cast<Eigen::Index>(c.kernel) * c.cout * c.cin;
        for (Eigen::Index i = 0; i < nw; ++i) params_(c.offset + i) = sd * normal(rng);
        params_.segment(bias_offset(c), c.cout).setZero();
    };
    for (auto& blk : blocks_) {
        fill(blk.conv1);
        fill(blk.conv2);
        if (blk.has_residual_conv) fill(blk.residual);
        for (const NormLayer* n : {&blk.norm1, &blk.norm2}) {
            if (n->offset >= 0) {
                params_.segment(n->offset, n->channels).setOnes();
                params_.segment(n->offset + n->channels, n->channels).setZero();
                state_.segment(n->state, n->channels).setZero();
                state_.segment(n->state + n->channels, n->channels).setOnes();
            }
        }
        params_(blk.prelu1) = kPreluInit;
        params_(blk.prelu2) = kPreluInit;
    }
    fill(output_);
}

Eigen::MatrixXd Tcn::forward(const Eigen::MatrixXd& x, Eigen::Index batch, Mode mode, Cache* cache,
                             bool update_running) {
    return run(x, batch, mode, cache, update_running, &state_);
}

Eigen::MatrixXd Tcn::infer(const Eigen::MatrixXd& x, Eigen::Index batch) const {
    return run(x, batch, Mode::inference, nullptr, false, nullptr);
}

Eigen::MatrixXd Tcn::run(const Eigen::MatrixXd& x, Eigen::Index batch, Mode mode, Cache* cache, bool update_running,
                         Eigen::VectorXd* state) const {
    if (batch < 1 || x.rows() != spec_.in_channels || x.cols() % batch != 0) {
        throw InputError("Tcn: input must be " + std::to_string(spec_.in_channels) + " x (L * batch)");
    }
    const Eigen::Index l_in = x.cols() / batch;
    const Eigen::Index rf = spec_.receptive_field();
    if (l_in < rf) {
        throw InputError("Tcn: input length " + std::to_string(l_in) + " below receptive field " + std::to_string(rf));
    }
    const Eigen::Index l_final = l_in - rf + 1;
    Eigen::VectorXd* running = (mode == Mode::train && update_running) ? state : nullptr;

    if (cache != nullptr) {
        cache->blocks.assign(blocks_.size(), {});
        cache->batch = batch;
    }
    Eigen::MatrixXd skip_sum = Eigen::MatrixXd::Zero(spec_.width, l_final * batch);
    Eigen::MatrixXd cur = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const Block& blk = blocks_[b];
        Cache::BlockCache* bc = cache != nullptr ? &cache->blocks[b] : nullptr;

        Eigen::MatrixXd a1 = conv_forward(params_, blk.conv1, cur, batch);
        if (blk.norm1.offset >= 0) {
            a1 = norm_forward(params_, blk.norm1, a1, mode, bc != nullptr ? &bc->n1 : nullptr, running, state_);
        }
        Eigen::MatrixXd h1 = prelu(a1, params_(blk.prelu1));
        Eigen::MatrixXd a2 = conv_forward(params_, blk.conv2, h1, batch);
        if (blk.norm2.offset >= 0) {
            a2 = norm_forward(params_, blk.norm2, a2, mode, bc != nullptr ? &bc->n2 : nullptr, running, state_);
        }
        Eigen::MatrixXd y = prelu(a2, params_(blk.prelu2));
        skip_sum += y.rightCols(l_final * batch);

        const Eigen::Index l_out = y.cols();
        Eigen::MatrixXd next = blk.has_residual_conv
                                   ? Eigen::MatrixXd(conv_forward(params_, blk.residual, cur.rightCols(l_out), batch))
                                   : Eigen::MatrixXd(cur.rightCols(l_out));
        next += y;
        if (bc != nullptr) {
            bc->x = std::move(cur);
            bc->a1 = std::move(a1);
            bc->h1 = std::move(h1);
            bc->a2 = std::move(a2);
        }
        cur = std::move(next);
    }
    Eigen::MatrixXd out = conv_forward(params_, output_, skip_sum, batch);
    if (cache != nullptr) cache->skip_sum = std::move(skip_sum);
    return out;
}

Eigen::MatrixXd Tcn::backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) throw InputError("Tcn::backward: gradient size mismatch");
    return backward_impl(cache, d_out, &grad);
}

Eigen::MatrixXd Tcn::backward_input(const Cache& cache, const Eigen::MatrixXd& d_out) const {
    return backward_impl(cache, d_out, nullptr);
}

Eigen::MatrixXd Tcn::backward_impl(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd* grad) const {
    if (cache.blocks.size() != blocks_.size()) throw InputError("Tcn::backward: cache does not match the network");
    const Eigen::Index batch = cache.batch;
    const Eigen::MatrixXd d_skip = conv_backward(params_, output_, cache.skip_sum, d_out, batch, grad);
    const Eigen::Index skip_cols = d_skip.cols();

    Eigen::MatrixXd d_next;  // gradient wrt the current block's output; empty means zero
    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
        const Block& blk = blocks_[bi];
        const Cache::BlockCache& bc = cache.blocks[bi];
        const Eigen::Index out_cols = bc.a2.cols();

        Eigen::MatrixXd dy = d_next.size() != 0 ? d_next : Eigen::MatrixXd::Zero(spec_.width, out_cols);
        dy.rightCols(skip_cols) += d_skip;

        Eigen::MatrixXd d_res;
        if (d_next.size() != 0) {
            d_res = blk.has_residual_conv
                        ? conv_backward(params_, blk.residual, bc.x.rightCols(out_cols), d_next, batch, grad)
                        : d_next;
        }

        double unused = 0.0;
        Eigen::MatrixXd da = prelu_backward(bc.a2, dy, params_(blk.prelu2), grad ? (*grad)(blk.prelu2) : unused);
        if (blk.norm2.offset >= 0) da = norm_backward(params_, blk.norm2, bc.n2, da, grad);
        Eigen::MatrixXd dh = conv_backward(params_, blk.conv2, bc.h1, da, batch, grad);
        da = prelu_backward(bc.a1, dh, params_(blk.prelu1), grad ? (*grad)(blk.prelu1) : unused);
        if (blk.norm1.offset >= 0) da = norm_backward(params_, blk.norm1, bc.n1, da, grad);
        Eigen::MatrixXd dx = conv_backward(params_, blk.conv1, bc.x, da, batch, grad);
        if (d_res.size() != 0) dx.rightCols(out_cols) += d_res;
        d_next = std::move(dx);
    }
    return d_next;
}

}  // namespace synthmarket
