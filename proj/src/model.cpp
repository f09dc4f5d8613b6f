#include "acmg/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "acmg/error.hpp"
#include "acmg/rng.hpp"

namespace acmg {

void ModelConfig::validate() const {
  if (input_dim_a == 0) throw ConfigError("model.input_dim_a must be positive");
  if (input_dim_t == 0) throw ConfigError("model.input_dim_t must be positive");
  if (d_model == 0) throw ConfigError("model.d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("model.n_heads must divide model.d_model (" + std::to_string(d_model) + ")");
  }
  if (ff_mult == 0) throw ConfigError("model.ff_mult must be positive");
  if (n_classes < 2) throw ConfigError("model.n_classes must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("model.dropout_rate must lie in [0, 1)");
  }
}

double to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_storage(Matrix& m) {
  for (double& v : m.values()) v = to_storage(v);
}

namespace {

Linear make_linear(const std::string& name, std::size_t in, std::size_t out, bool bias,
                   std::mt19937_64& rng) {
  Linear l;
  l.weight = {name + ".w", Matrix(in, out), {}};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : l.weight.value.values()) v = to_storage(u(rng));
  if (bias) l.bias = ad::Parameter{name + ".b", Matrix(1, out), {}};
  return l;
}

ad::Parameter ones(const std::string& name, std::size_t n) {
  return {name, Matrix(1, n, 1.0), {}};
}

ad::Parameter zeros(const std::string& name, std::size_t n) { return {name, Matrix(1, n), {}}; }

std::vector<EncoderLayer> make_encoder(const std::string& prefix, const ModelConfig& cfg,
                                       std::mt19937_64& rng) {
  std::vector<EncoderLayer> layers;
  const std::size_t d = cfg.d_model;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    EncoderLayer e;
    e.wq = make_linear(p + ".attn.q", d, d, true, rng);
    e.wk = make_linear(p + ".attn.k", d, d, true, rng);
    e.wv = make_linear(p + ".attn.v", d, d, true, rng);
    e.wo = make_linear(p + ".attn.o", d, d, true, rng);
    e.ln1_gamma = ones(p + ".ln1.gamma", d);
    e.ln1_beta = zeros(p + ".ln1.beta", d);
    e.ff1 = make_linear(p + ".ff1", d, d * cfg.ff_mult, true, rng);
    e.ff2 = make_linear(p + ".ff2", d * cfg.ff_mult, d, true, rng);
    e.ln2_gamma = ones(p + ".ln2.gamma", d);
    e.ln2_beta = zeros(p + ".ln2.beta", d);
    layers.push_back(std::move(e));
  }
  return layers;
}

template <class L, class Fn>
void visit_linear(L& l, Fn&& fn) {
  fn(l.weight);
  if (l.bias) fn(*l.bias);
}

template <class Fn>
void visit_encoder(std::vector<EncoderLayer>& enc, Fn&& fn) {
  for (auto& e : enc) {
    visit_linear(e.wq, fn);
    visit_linear(e.wk, fn);
    visit_linear(e.wv, fn);
    visit_linear(e.wo, fn);
    fn(e.ln1_gamma);
    fn(e.ln1_beta);
    visit_linear(e.ff1, fn);
    visit_linear(e.ff2, fn);
    fn(e.ln2_gamma);
    fn(e.ln2_beta);
  }
}

// Component streams are seeded independently so that models differing only
// in gating mode share every other initial weight.
enum Stream : std::uint64_t { kProjection = 1, kEncoderA, kEncoderT, kHead, kGating };

}  // namespace

FusionModel::FusionModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto proj_rng = std::mt19937_64(derive_seed(cfg.seed, kProjection));
  proj_a_ = make_linear("proj_a", cfg.input_dim_a, cfg.d_model, false, proj_rng);
  proj_t_ = make_linear("proj_t", cfg.input_dim_t, cfg.d_model, false, proj_rng);
  if (cfg.gating_mode != GatingMode::none) {
    auto gate_rng = std::mt19937_64(derive_seed(cfg.seed, kGating));
    gating_ = GatingParams::init(cfg.d_model, gate_rng);
    round_to_storage(gating_->w_a.value);
    round_to_storage(gating_->w_t.value);
  }
  auto enc_a_rng = std::mt19937_64(derive_seed(cfg.seed, kEncoderA));
  enc_a_ = make_encoder("enc_a", cfg, enc_a_rng);
  auto enc_t_rng = std::mt19937_64(derive_seed(cfg.seed, kEncoderT));
  enc_t_ = make_encoder("enc_t", cfg, enc_t_rng);
  auto head_rng = std::mt19937_64(derive_seed(cfg.seed, kHead));
  head1_ = make_linear("head.fc1", 2 * cfg.d_model, cfg.d_model, true, head_rng);
  head2_ = make_linear("head.fc2", cfg.d_model, cfg.n_classes, true, head_rng);
}

std::vector<ad::Parameter*> FusionModel::parameters() {
  std::vector<ad::Parameter*> out;
  auto push = [&out](ad::Parameter& p) { out.push_back(&p); };
  visit_linear(proj_a_, push);
  visit_linear(proj_t_, push);
  if (gating_) {
    push(gating_->w_a);
    push(gating_->b_a);
    push(gating_->w_t);
    push(gating_->b_t);
  }
  visit_encoder(enc_a_, push);
  visit_encoder(enc_t_, push);
  visit_linear(head1_, push);
  visit_linear(head2_, push);
  return out;
}

std::vector<const ad::Parameter*> FusionModel::parameters() const {
  auto mut = const_cast<FusionModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void FusionModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Matrix positional_encoding(std::size_t T, std::size_t d) {
  Matrix pe(T, d);
  for (std::size_t pos = 0; pos < T; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

template <class L>
ad::Var apply_linear(ad::Tape& tape, L& l, ad::Var x) {
  ad::Var y = ad::matmul(x, tape.param(l.weight));
  if (l.bias) y = ad::add_row(y, tape.param(*l.bias));
  return y;
}

ad::Var dropout(ad::Var x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  Matrix keep(x.rows(), x.cols());
  std::bernoulli_distribution bern(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : keep.values()) v = bern(*rng) ? scale : 0.0;
  return ad::mul_constant(x, keep);
}

template <class E>
ad::Var self_attention(ad::Tape& tape, E& layer, ad::Var x, std::size_t valid, std::size_t n_heads) {
  const std::size_t T = x.rows();
  const std::size_t d = x.cols();
  const std::size_t dh = d / n_heads;
  const ad::Var q = apply_linear(tape, layer.wq, x);
  const ad::Var k = apply_linear(tape, layer.wk, x);
  const ad::Var v = apply_linear(tape, layer.wv, x);
  // Invalid keys get a large negative logit so their weight underflows to zero.
  Matrix key_mask(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = valid; j < T; ++j) key_mask(i, j) = -1e9;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, dh);
    const ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (valid < T) scores = ad::add_constant(scores, key_mask);
    heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  const ad::Var joined = n_heads == 1 ? heads.front() : ad::concat_cols(heads);
  return apply_linear(tape, layer.wo, joined);
}

template <class E>
ad::Var encoder_layer(ad::Tape& tape, E& layer, ad::Var x, std::size_t valid,
                      const ModelConfig& cfg, std::mt19937_64* rng) {
  ad::Var attn = dropout(self_attention(tape, layer, x, valid, cfg.n_heads), cfg.dropout_rate, rng);
  ad::Var h = ad::layernorm_rows(ad::add(x, attn));
  h = ad::add_row(ad::mul_row(h, tape.param(layer.ln1_gamma)), tape.param(layer.ln1_beta));
  ad::Var ff = apply_linear(tape, layer.ff2, ad::gelu(apply_linear(tape, layer.ff1, h)));
  ff = dropout(ff, cfg.dropout_rate, rng);
  ad::Var out = ad::layernorm_rows(ad::add(h, ff));
  return ad::add_row(ad::mul_row(out, tape.param(layer.ln2_gamma)), tape.param(layer.ln2_beta));
}

void check_input(const char* what, const MaskedSequence& s, std::size_t expected) {
  if (s.dim() != expected) {
    throw ShapeError(std::string("fusion-model: ") + what + " features have width " +
                     std::to_string(s.dim()) + ", model expects " + std::to_string(expected));
  }
  if (s.valid_count() == 0) throw EmptySequenceError(std::string("fusion-model: empty ") + what + " sequence");
}

}  // namespace

template <class Self>
ForwardResult FusionModel::forward_impl(Self& self, ad::Tape& tape, const ModelInput& in,
                                        std::mt19937_64* rng) {
  const ModelConfig& cfg = self.cfg_;
  check_input("acoustic", in.acoustic, cfg.input_dim_a);
  check_input("textual", in.textual, cfg.input_dim_t);
  const std::size_t n_a = in.acoustic.valid_count();
  const std::size_t n_t = in.textual.valid_count();

  // Projection has no bias so padded (zero) rows stay zero.
  const ad::Var h_a = ad::matmul(tape.constant(in.acoustic.features()), tape.param(self.proj_a_.weight));
  const ad::Var h_t = ad::matmul(tape.constant(in.textual.features()), tape.param(self.proj_t_.weight));

  ad::GatedPair gated{h_a, {}, h_t, {}};
  if (self.gating_) {
    auto& g = *self.gating_;
    gated = ad::apply_gating(cfg.gating_mode, h_a, n_a, h_t, n_t, tape.param(g.w_a),
                             tape.param(g.b_a), tape.param(g.w_t), tape.param(g.b_t));
  }

  auto branch = [&](ad::Var x, std::size_t valid, auto& layers) {
    if (cfg.positional_encoding) {
      Matrix pe = positional_encoding(x.rows(), x.cols());
      std::fill(pe.values().begin() + static_cast<std::ptrdiff_t>(valid * pe.cols()), pe.values().end(), 0.0);
      x = ad::add_constant(x, pe);
    }
    for (auto& layer : layers) x = encoder_layer(tape, layer, x, valid, cfg, rng);
    return ad::masked_mean_pool(x, valid);
  };
  const ad::Var pooled_a = branch(gated.refined_a, n_a, self.enc_a_);
  const ad::Var pooled_t = branch(gated.refined_t, n_t, self.enc_t_);

  const ad::Var joint = ad::concat_cols(pooled_a, pooled_t);
  const ad::Var hidden = ad::gelu(apply_linear(tape, self.head1_, joint));
  const ad::Var logits = apply_linear(tape, self.head2_, hidden);
  return {logits, gated.gates_a, gated.gates_t};
}

ForwardResult FusionModel::forward(ad::Tape& tape, const ModelInput& in, std::mt19937_64* dropout_rng) {
  return forward_impl(*this, tape, in, dropout_rng);
}

ForwardResult FusionModel::forward(ad::Tape& tape, const ModelInput& in) const {
  return forward_impl(*this, tape, in, nullptr);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const Matrix p = acmg::softmax_rows(Matrix(1, logits.size(), logits));
  return p.values();
}

double cross_entropy_loss(const std::vector<double>& logits, std::size_t label) {
  ad::Tape tape(false);
  return ad::cross_entropy(tape.constant(Matrix(1, logits.size(), logits)), label).value()[0];
}

Prediction predict(const FusionModel& model, const ModelInput& in) {
  ad::Tape tape(false);
  const ForwardResult r = model.forward(tape, in);
  Prediction p;
  const auto& z = r.logits.value().values();
  p.label = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  p.probabilities = softmax(z);
  if (r.gates_a.valid()) {
    const auto& ga = r.gates_a.value().values();
    p.gates_a.assign(ga.begin(), ga.begin() + static_cast<std::ptrdiff_t>(in.acoustic.valid_count()));
    const auto& gt = r.gates_t.value().values();
    p.gates_t.assign(gt.begin(), gt.begin() + static_cast<std::ptrdiff_t>(in.textual.valid_count()));
  }
  return p;
}

}  // namespace acmg
