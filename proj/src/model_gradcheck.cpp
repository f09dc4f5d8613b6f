#include "acmg/model_gradcheck.hpp"

#include <algorithm>
#include <random>

#include "acmg/error.hpp"
#include "acmg/rng.hpp"
#include "acmg/train.hpp"

namespace acmg {

ModelConfig gradcheck_model_config(GatingMode mode) {
  ModelConfig c;
  c.input_dim_a = 6;
  c.input_dim_t = 5;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.ff_mult = 2;
  c.n_classes = 3;
  c.gating_mode = mode;
  c.dropout_rate = 0.0;
  c.seed = 3;
  return c;
}

namespace {

MaskedSequence random_sequence(std::size_t valid, std::size_t padded, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(padded, d);
  for (std::size_t i = 0; i < valid; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = n(rng);
  return MaskedSequence(std::move(x), valid);
}

}  // namespace

ad::GradcheckReport gradcheck_model(const ModelConfig& cfg_in, const ModelGradcheckOptions& opts) {
  ModelConfig cfg = cfg_in;
  cfg.dropout_rate = 0.0;
  FusionModel model(cfg);

  std::mt19937_64 rng(derive_seed(opts.data_seed, {0x6c}));
  const std::vector<MaskedSequence> acoustic = {random_sequence(5, 7, cfg.input_dim_a, rng),
                                                random_sequence(4, 4, cfg.input_dim_a, rng)};
  const std::vector<MaskedSequence> textual = {random_sequence(3, 3, cfg.input_dim_t, rng),
                                               random_sequence(6, 8, cfg.input_dim_t, rng)};
  const std::vector<ModelInput> inputs = {{acoustic[0], textual[0]}, {acoustic[1], textual[1]}};
  const std::vector<std::size_t> labels = {0, std::min<std::size_t>(2, cfg.n_classes - 1)};

  auto params = model.parameters();
  ad::GradientHook hook;
  if (opts.corrupt_parameter) {
    const auto it = std::find_if(params.begin(), params.end(),
                                 [&](const ad::Parameter* p) { return p->name == *opts.corrupt_parameter; });
    if (it == params.end()) throw ConfigError("gradcheck: no parameter named '" + *opts.corrupt_parameter + "'");
    const auto idx = static_cast<std::size_t>(it - params.begin());
    hook = [idx](std::vector<Matrix>& g) { g[idx][0] = 1.5 * g[idx][0] + 1e-3; };
  }
  const ad::LossFn loss = [&](ad::Tape& tape) { return batch_loss(model, tape, inputs, labels); };
  return ad::gradcheck(loss, params, opts.step, opts.tol, hook);
}

}  // namespace acmg
