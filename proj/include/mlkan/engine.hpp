#pragma once

#include <span>
#include <vector>

#include "mlkan/model.hpp"

namespace mlkan::model {

/// A seed direction over the raw network inputs. `second` requests the
/// second directional derivative as well (otherwise it is left at zero).
struct JetDirection {
  std::vector<double> seed;
  bool second = true;
};

/// Per-sample forward and reverse sweep for training. Each scalar carries a
/// value plus (d1, d2) per direction; the backward pass differentiates any
/// loss of those quantities with respect to the flattened parameters.
///
/// Jet layout per scalar: [v, d1_0, d2_0, d1_1, d2_1, ...].
class Engine {
 public:
  explicit Engine(const Network& net, std::vector<JetDirection> dirs = {});

  int width() const noexcept { return width_; }
  int directions() const noexcept { return static_cast<int>(dirs_.size()); }

  /// Evaluates one sample and keeps what backward() needs.
  void forward(std::span<const double> x);
  /// outputs() * width() values; output q starts at q * width().
  std::span<const double> output() const { return out_; }
  /// Adds d loss / d params to `grad` given the adjoint of output().
  void backward(std::span<const double> out_adj, std::span<double> grad);

 private:
  struct KanState {
    std::vector<double> z;               // P x J
    std::vector<double> nd;              // P x 3: N', N'', N'''
    std::vector<double> s;               // P x J
    std::vector<int> k0;                 // first active basis index per input
    std::vector<int> cnt;                // active window length per input
    std::vector<double> f;               // P x m x 4 basis derivatives
    std::vector<double> phi;             // P x m x J basis jets
    std::vector<double> y;               // Q x J
  };
  struct MlpState {
    std::vector<double> z;   // P x J
    std::vector<double> a;   // Q x J pre-activation
    std::vector<double> g;   // Q x 3 activation derivatives
    std::vector<double> y;   // Q x J
  };

  void kan_forward(std::size_t l, std::span<const double> in);
  void kan_backward(std::size_t l, std::span<const double> y_adj, std::span<double> grad, std::span<double> z_adj,
                    bool need_input);
  void mlp_forward(std::size_t l, std::span<const double> in);
  void mlp_backward(std::size_t l, std::span<const double> y_adj, std::span<double> grad, std::span<double> z_adj,
                    bool need_input);

  const Network& net_;
  std::vector<JetDirection> dirs_;
  int width_;
  std::vector<std::size_t> offsets_;
  std::vector<KanState> kan_;
  std::vector<MlpState> mlp_;
  std::vector<double> in_;
  std::vector<double> out_;
  std::vector<double> adj_a_, adj_b_, phibar_;
};

}  // namespace mlkan::model
