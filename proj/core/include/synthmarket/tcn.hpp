#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synthmarket/random.hpp"

namespace synthmarket {

/// Temporal convolutional network of residual blocks. Each block is two
/// dilated valid convolutions (optional batch norm, scalar PReLU after each),
/// with a residual path (1x1 conv when the channel count changes) and a skip
/// output. Skips are summed and mapped by a final linear 1x1 conv.
struct TcnSpec {
    int in_channels = 3;
    int out_channels = 1;
    int width = 100;
    std::vector<int> dilations{1, 1, 2, 4, 8, 16};
    std::vector<int> kernels{1, 2, 2, 2, 2, 2};
    bool batch_norm = true;

    static TcnSpec generator(int width = 100);
    static TcnSpec discriminator(int width = 100);

    int blocks() const { return static_cast<int>(dilations.size()); }
    /// 1 + 2 * sum d_i (k_i - 1); an input of length L yields L - rf + 1 outputs.
    int receptive_field() const;
    void validate() const;

    bool operator==(const TcnSpec&) const = default;
};

nlohmann::json to_json(const TcnSpec& spec);
TcnSpec tcn_spec_from_json(const nlohmann::json& j);

/// Activations are C x (L * B) matrices with time-major columns: column
/// t * B + b holds time step t of batch element b. A time shift is then a
/// contiguous column block.
class Tcn {
public:
    Tcn() = default;
    explicit Tcn(TcnSpec spec);

    struct ConvLayer {
        Eigen::Index offset = 0;  // k weight matrices (cout x cin, column-major), then cout biases
        int cin = 0, cout = 0, kernel = 1, dilation = 1;
        Eigen::Index size() const { return static_cast<Eigen::Index>(kernel) * cout * cin + cout; }
    };
    struct NormLayer {
        Eigen::Index offset = -1;  // gamma then beta; -1 when disabled
        Eigen::Index state = -1;   // running mean then running var in state()
        int channels = 0;
    };
    struct Block {
        ConvLayer conv1, conv2, residual;
        NormLayer norm1, norm2;
        Eigen::Index prelu1 = 0, prelu2 = 0;
        bool has_residual_conv = false;
    };

    enum class Mode { train, inference };

    struct Cache;

    const TcnSpec& spec() const { return spec_; }
    Eigen::Index n_params() const { return params_.size(); }
    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }
    /// Batch-norm running statistics.
    Eigen::VectorXd& state() { return state_; }
    const Eigen::VectorXd& state() const { return state_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const ConvLayer& output_layer() const { return output_; }

    /// He fan-in normal weights, zero biases, unit gamma, PReLU slope 0.25.
    void initialize(Rng& rng);

    /// x: in_channels x (L * batch) with L >= receptive field. Returns
    /// out_channels x ((L - rf + 1) * batch). Training mode uses batch
    /// statistics and, when update_running is set, folds them into the
    /// running averages with momentum 0.9.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::Index batch, Mode mode, Cache* cache = nullptr,
                            bool update_running = true);

    /// Inference-mode forward; never touches state.
    Eigen::MatrixXd infer(const Eigen::MatrixXd& x, Eigen::Index batch) const;

    /// Accumulates d(loss)/d(params) into grad and returns d(loss)/d(x).
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const;

    /// d(loss)/d(x) only; skips the parameter gradients.
    Eigen::MatrixXd backward_input(const Cache& cache, const Eigen::MatrixXd& d_out) const;

private:
    Eigen::MatrixXd backward_impl(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd* grad) const;
    Eigen::MatrixXd run(const Eigen::MatrixXd& x, Eigen::Index batch, Mode mode, Cache* cache, bool update_running,
                        Eigen::VectorXd* state) const;

    TcnSpec spec_;
    std::vector<Block> blocks_;
    ConvLayer output_;
    Eigen::VectorXd params_;
    Eigen::VectorXd state_;
};

struct Tcn::Cache {
    struct Norm {
        Eigen::MatrixXd xhat;
        Eigen::VectorXd inv_std;
    };
    struct BlockCache {
        Eigen::MatrixXd x;       // block input
        Eigen::MatrixXd a1, a2;  // PReLU inputs
        Eigen::MatrixXd h1;      // conv2 input
        Norm n1, n2;
    };
    std::vector<BlockCache> blocks;
    Eigen::MatrixXd skip_sum;
    Eigen::Index batch = 0;
};

}  // namespace synthmarket
