#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace spikerep {

// Minimal reverse-mode tape over dense matrices. Values are computed eagerly;
// backward() walks the tape in reverse, invoking one closure per node.
// Batched token sequences are laid out as (batch * tokens) x width matrices so
// the linear layers become single large matrix products.
class Tape {
public:
    using Ref = int;

    Ref input(const Eigen::MatrixXd& value, bool requires_grad = false);

    Ref matmul(Ref a, Ref b);
    Ref add(Ref a, Ref b);            // identical shapes
    Ref add_rowvec(Ref a, Ref bias);  // bias is 1 x cols, broadcast over rows
    Ref mul_rowvec(Ref a, Ref gamma);
    Ref scale(Ref a, double c);
    Ref silu(Ref a);  // x * sigmoid(x)
    Ref layer_norm(Ref a, double eps = 1e-5);  // row-wise standardization

    // Multi-head softmax attention. q, k, v are (batch * tokens) x width with
    // width divisible by heads; each sample's token block attends only within
    // itself.
    Ref attention(Ref q, Ref k, Ref v, int batch, int tokens, int heads);

    Ref mean_pool(Ref a, int batch, int tokens);  // (B*T) x E -> B x E
    // Adds the tokens x width matrix pos to every sample's token block.
    Ref add_timevec(Ref a, Ref pos, int batch, int tokens);
    Ref l2_normalize_rows(Ref a, double eps = 1e-12);

    // Mean over rows i of -log softmax_j(q_i . keys_j / tau) at j = i.
    // keys are constants: gradients never flow into the target network.
    Ref info_nce(Ref q, const Eigen::MatrixXd& keys, double tau);
    Ref mse(Ref a, const Eigen::MatrixXd& target);  // mean over all entries

    const Eigen::MatrixXd& value(Ref r) const { return nodes_[r].value; }
    const Eigen::MatrixXd& grad(Ref r) const { return nodes_[r].grad; }
    bool requires_grad(Ref r) const { return nodes_[r].requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node
    // reachable from a requires_grad input. loss must be 1x1.
    void backward(Ref loss);

private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    Ref push(Eigen::MatrixXd value, bool requires_grad,
             std::function<void(Tape&)> back);
    void accumulate(Ref r, Eigen::MatrixXd g);
    void check(Ref r) const;

    std::vector<Node> nodes_;
};

}  // namespace spikerep
