#include "spikerep/ad.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace spikerep {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd p = (logits.colwise() - row_max).array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

}  // namespace

Tape::Ref Tape::push(Eigen::MatrixXd value, bool requires_grad,
                     std::function<void(Tape&)> back) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<Ref>(nodes_.size()) - 1;
}

void Tape::check(Ref r) const {
    if (r < 0 || r >= size()) throw std::out_of_range("tape: bad node ref");
}

void Tape::accumulate(Ref r, Eigen::MatrixXd g) {
    Node& node = nodes_[r];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
        node.grad = std::move(g);  // single-consumer fast path
    else
        node.grad += g;
}

Tape::Ref Tape::input(const Eigen::MatrixXd& value, bool requires_grad) {
    return push(value, requires_grad, {});
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
    check(a);
    check(b);
    if (nodes_[a].value.cols() != nodes_[b].value.rows())
        throw std::invalid_argument("tape: matmul shape mismatch");
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    Ref out = push(nodes_[a].value * nodes_[b].value, rg, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        if (t.nodes_[a].requires_grad)
            t.accumulate(a, g * t.nodes_[b].value.transpose());
        if (t.nodes_[b].requires_grad)
            t.accumulate(b, t.nodes_[a].value.transpose() * g);
    };
    return out;
}

Tape::Ref Tape::add(Ref a, Ref b) {
    check(a);
    check(b);
    if (nodes_[a].value.rows() != nodes_[b].value.rows() ||
        nodes_[a].value.cols() != nodes_[b].value.cols())
        throw std::invalid_argument("tape: add shape mismatch");
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    Ref out = push(nodes_[a].value + nodes_[b].value, rg, {});
    nodes_[out].back = [a, b, out](Tape& t) {
        t.accumulate(a, t.nodes_[out].grad);
        t.accumulate(b, t.nodes_[out].grad);
    };
    return out;
}

Tape::Ref Tape::add_rowvec(Ref a, Ref bias) {
    check(a);
    check(bias);
    if (nodes_[bias].value.rows() != 1 ||
        nodes_[bias].value.cols() != nodes_[a].value.cols())
        throw std::invalid_argument("tape: add_rowvec shape mismatch");
    const bool rg = nodes_[a].requires_grad || nodes_[bias].requires_grad;
    Eigen::MatrixXd v = nodes_[a].value;
    v.rowwise() += Eigen::RowVectorXd(nodes_[bias].value.row(0));
    Ref out = push(std::move(v), rg, {});
    nodes_[out].back = [a, bias, out](Tape& t) {
        t.accumulate(a, t.nodes_[out].grad);
        if (t.nodes_[bias].requires_grad)
            t.accumulate(bias, t.nodes_[out].grad.colwise().sum());
    };
    return out;
}

Tape::Ref Tape::mul_rowvec(Ref a, Ref gamma) {
    check(a);
    check(gamma);
    if (nodes_[gamma].value.rows() != 1 ||
        nodes_[gamma].value.cols() != nodes_[a].value.cols())
        throw std::invalid_argument("tape: mul_rowvec shape mismatch");
    const bool rg = nodes_[a].requires_grad || nodes_[gamma].requires_grad;
    Eigen::MatrixXd v = nodes_[a].value;
    v.array().rowwise() *= nodes_[gamma].value.row(0).array();
    Ref out = push(std::move(v), rg, {});
    nodes_[out].back = [a, gamma, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        if (t.nodes_[a].requires_grad) {
            Eigen::MatrixXd da = g;
            da.array().rowwise() *= t.nodes_[gamma].value.row(0).array();
            t.accumulate(a, da);
        }
        if (t.nodes_[gamma].requires_grad)
            t.accumulate(gamma,
                         (g.array() * t.nodes_[a].value.array())
                             .colwise()
                             .sum()
                             .matrix());
    };
    return out;
}

Tape::Ref Tape::scale(Ref a, double c) {
    check(a);
    Ref out = push(nodes_[a].value * c, nodes_[a].requires_grad, {});
    nodes_[out].back = [a, c, out](Tape& t) {
        t.accumulate(a, t.nodes_[out].grad * c);
    };
    return out;
}

Tape::Ref Tape::silu(Ref a) {
    check(a);
    const Eigen::ArrayXXd x = nodes_[a].value.array();
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x).exp());
    Ref out = push((x * sig).matrix(), nodes_[a].requires_grad, {});
    nodes_[out].back = [a, sig, out](Tape& t) {
        const Eigen::ArrayXXd x = t.nodes_[a].value.array();
        // d/dx [x * sig(x)] = sig(x) * (1 + x * (1 - sig(x)))
        const Eigen::ArrayXXd d = sig * (1.0 + x * (1.0 - sig));
        t.accumulate(a, (t.nodes_[out].grad.array() * d).matrix());
    };
    return out;
}

Tape::Ref Tape::layer_norm(Ref a, double eps) {
    check(a);
    const Eigen::MatrixXd& x = nodes_[a].value;
    const int d = static_cast<int>(x.cols());
    const Eigen::VectorXd mean = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - mean;
    const Eigen::VectorXd inv_std =
        (centered.rowwise().squaredNorm().array() / d + eps).rsqrt();
    Eigen::MatrixXd y = centered.array().colwise() * inv_std.array();
    Ref out = push(std::move(y), nodes_[a].requires_grad, {});
    nodes_[out].back = [a, inv_std, out](Tape& t) {
        const Eigen::MatrixXd& y = t.nodes_[out].value;
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        const Eigen::VectorXd g_mean = g.rowwise().mean();
        const Eigen::VectorXd gy_mean =
            (g.array() * y.array()).rowwise().mean();
        Eigen::MatrixXd dx =
            (g.colwise() - g_mean) - (y.array().colwise() * gy_mean.array()).matrix();
        dx.array().colwise() *= inv_std.array();
        t.accumulate(a, dx);
    };
    return out;
}

Tape::Ref Tape::attention(Ref q, Ref k, Ref v, int batch, int tokens,
                          int heads) {
    check(q);
    check(k);
    check(v);
    const Eigen::MatrixXd& Q = nodes_[q].value;
    const Eigen::MatrixXd& K = nodes_[k].value;
    const Eigen::MatrixXd& V = nodes_[v].value;
    const int rows = batch * tokens;
    const int width = static_cast<int>(Q.cols());
    if (Q.rows() != rows || K.rows() != rows || V.rows() != rows ||
        K.cols() != width || V.cols() != width)
        throw std::invalid_argument("tape: attention shape mismatch");
    if (heads < 1 || width % heads != 0)
        throw std::invalid_argument("tape: width must divide into heads");
    const int dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // attention weights are kept for the backward pass
    auto weights = std::make_shared<std::vector<Eigen::MatrixXd>>();
    weights->reserve(static_cast<std::size_t>(batch) * heads);
    Eigen::MatrixXd out_value(rows, width);
    Eigen::MatrixXd S(tokens, tokens);
    for (int b = 0; b < batch; ++b) {
        const int r0 = b * tokens;
        for (int h = 0; h < heads; ++h) {
            const int c0 = h * dh;
            const auto Qh = Q.block(r0, c0, tokens, dh);
            const auto Kh = K.block(r0, c0, tokens, dh);
            const auto Vh = V.block(r0, c0, tokens, dh);
            S.noalias() = Qh * Kh.transpose();
            S *= scale;
            Eigen::MatrixXd A = softmax_rows(S);
            out_value.block(r0, c0, tokens, dh).noalias() = A * Vh;
            weights->push_back(std::move(A));
        }
    }

    const bool rg = nodes_[q].requires_grad || nodes_[k].requires_grad ||
                    nodes_[v].requires_grad;
    Ref out = push(std::move(out_value), rg, {});
    nodes_[out].back = [q, k, v, batch, tokens, heads, dh, scale, weights,
                        out](Tape& t) {
        const Eigen::MatrixXd& Q = t.nodes_[q].value;
        const Eigen::MatrixXd& K = t.nodes_[k].value;
        const Eigen::MatrixXd& V = t.nodes_[v].value;
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        const int width = heads * dh;
        Eigen::MatrixXd dQ(Q.rows(), width);
        Eigen::MatrixXd dK(Q.rows(), width);
        Eigen::MatrixXd dV(Q.rows(), width);
        Eigen::MatrixXd dS(tokens, tokens);  // reused scratch
        Eigen::VectorXd row_dot(tokens);
        for (int b = 0; b < batch; ++b) {
            const int r0 = b * tokens;
            for (int h = 0; h < heads; ++h) {
                const int c0 = h * dh;
                const Eigen::MatrixXd& A =
                    (*weights)[static_cast<std::size_t>(b) * heads + h];
                const auto Qh = Q.block(r0, c0, tokens, dh);
                const auto Kh = K.block(r0, c0, tokens, dh);
                const auto Vh = V.block(r0, c0, tokens, dh);
                const auto gh = g.block(r0, c0, tokens, dh);

                dV.block(r0, c0, tokens, dh).noalias() = A.transpose() * gh;
                dS.noalias() = gh * Vh.transpose();  // holds dA first
                row_dot = (dS.array() * A.array()).rowwise().sum();
                dS = (A.array() * (dS.colwise() - row_dot).array()).matrix();
                dS *= scale;
                dQ.block(r0, c0, tokens, dh).noalias() = dS * Kh;
                dK.block(r0, c0, tokens, dh).noalias() = dS.transpose() * Qh;
            }
        }
        t.accumulate(q, std::move(dQ));
        t.accumulate(k, std::move(dK));
        t.accumulate(v, std::move(dV));
    };
    return out;
}

Tape::Ref Tape::mean_pool(Ref a, int batch, int tokens) {
    check(a);
    const Eigen::MatrixXd& x = nodes_[a].value;
    if (x.rows() != static_cast<Eigen::Index>(batch) * tokens)
        throw std::invalid_argument("tape: mean_pool shape mismatch");
    Eigen::MatrixXd y(batch, x.cols());
    for (int b = 0; b < batch; ++b)
        y.row(b) = x.middleRows(b * tokens, tokens).colwise().mean();
    Ref out = push(std::move(y), nodes_[a].requires_grad, {});
    nodes_[out].back = [a, batch, tokens, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        Eigen::MatrixXd dx(static_cast<Eigen::Index>(batch) * tokens, g.cols());
        for (int b = 0; b < batch; ++b)
            dx.middleRows(b * tokens, tokens) =
                (g.row(b) / tokens).replicate(tokens, 1);
        t.accumulate(a, dx);
    };
    return out;
}

Tape::Ref Tape::add_timevec(Ref a, Ref pos, int batch, int tokens) {
    check(a);
    check(pos);
    const Eigen::MatrixXd& x = nodes_[a].value;
    const Eigen::MatrixXd& p = nodes_[pos].value;
    if (x.rows() != static_cast<Eigen::Index>(batch) * tokens ||
        p.rows() != tokens || p.cols() != x.cols())
        throw std::invalid_argument("tape: add_timevec shape mismatch");
    Eigen::MatrixXd y = x + p.replicate(batch, 1);
    const bool rg = nodes_[a].requires_grad || nodes_[pos].requires_grad;
    Ref out = push(std::move(y), rg, {});
    nodes_[out].back = [a, pos, batch, tokens, out](Tape& t) {
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        t.accumulate(a, g);
        if (t.nodes_[pos].requires_grad) {
            Eigen::MatrixXd dp = Eigen::MatrixXd::Zero(tokens, g.cols());
            for (int b = 0; b < batch; ++b)
                dp += g.middleRows(b * tokens, tokens);
            t.accumulate(pos, dp);
        }
    };
    return out;
}

Tape::Ref Tape::l2_normalize_rows(Ref a, double eps) {
    check(a);
    const Eigen::MatrixXd& x = nodes_[a].value;
    const Eigen::VectorXd inv_norm =
        (x.rowwise().squaredNorm().array() + eps).rsqrt();
    Eigen::MatrixXd y = x.array().colwise() * inv_norm.array();
    Ref out = push(std::move(y), nodes_[a].requires_grad, {});
    nodes_[out].back = [a, inv_norm, out](Tape& t) {
        const Eigen::MatrixXd& y = t.nodes_[out].value;
        const Eigen::MatrixXd& g = t.nodes_[out].grad;
        const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
        Eigen::MatrixXd dx = g - (y.array().colwise() * dot.array()).matrix();
        dx.array().colwise() *= inv_norm.array();
        t.accumulate(a, dx);
    };
    return out;
}

Tape::Ref Tape::info_nce(Ref q, const Eigen::MatrixXd& keys, double tau) {
    check(q);
    const Eigen::MatrixXd& Q = nodes_[q].value;
    const int B = static_cast<int>(Q.rows());
    if (keys.rows() != B || keys.cols() != Q.cols())
        throw std::invalid_argument("tape: info_nce shape mismatch");
    if (B < 2) throw std::invalid_argument("tape: info_nce needs B >= 2");
    if (tau <= 0.0) throw std::invalid_argument("tape: tau must be positive");

    const Eigen::MatrixXd logits = Q * keys.transpose() / tau;
    const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    const Eigen::MatrixXd shifted = logits.colwise() - row_max;
    const Eigen::VectorXd log_norm =
        shifted.array().exp().rowwise().sum().log();
    double loss = 0.0;
    for (int i = 0; i < B; ++i) loss += log_norm(i) - shifted(i, i);
    loss /= B;

    auto probs =
        std::make_shared<Eigen::MatrixXd>(softmax_rows(logits));
    Ref out = push(Eigen::MatrixXd::Constant(1, 1, loss),
                   nodes_[q].requires_grad, {});
    nodes_[out].back = [q, keys, tau, probs, out](Tape& t) {
        const double gl = t.nodes_[out].grad(0, 0);
        const int B = static_cast<int>(probs->rows());
        Eigen::MatrixXd delta = *probs;
        delta.diagonal().array() -= 1.0;
        t.accumulate(q, (gl / (B * tau)) * delta * keys);
    };
    return out;
}

Tape::Ref Tape::mse(Ref a, const Eigen::MatrixXd& target) {
    check(a);
    const Eigen::MatrixXd& x = nodes_[a].value;
    if (x.rows() != target.rows() || x.cols() != target.cols())
        throw std::invalid_argument("tape: mse shape mismatch");
    const double n = static_cast<double>(x.size());
    const double loss = (x - target).squaredNorm() / n;
    Ref out = push(Eigen::MatrixXd::Constant(1, 1, loss),
                   nodes_[a].requires_grad, {});
    nodes_[out].back = [a, target, n, out](Tape& t) {
        const double gl = t.nodes_[out].grad(0, 0);
        t.accumulate(a, (2.0 * gl / n) * (t.nodes_[a].value - target));
    };
    return out;
}

void Tape::backward(Ref loss) {
    check(loss);
    if (nodes_[loss].value.size() != 1)
        throw std::invalid_argument("tape: backward needs a scalar loss");
    if (!nodes_[loss].requires_grad)
        throw std::invalid_argument("tape: loss does not depend on parameters");
    nodes_[loss].grad = Eigen::MatrixXd::Constant(1, 1, 1.0);
    for (Ref r = loss; r >= 0; --r) {
        Node& node = nodes_[r];
        if (!node.requires_grad || node.grad.size() == 0 || !node.back)
            continue;
        node.back(*this);
    }
}

}  // namespace spikerep
