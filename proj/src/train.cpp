#include "acmg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "acmg/metrics.hpp"
#include "acmg/rng.hpp"

namespace acmg {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("train.optimizer: expected sgd|adam, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be a finite value >= 0");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in [0, 1)");
}

std::vector<double> class_weights(const Corpus& corpus, bool inverse_frequency) {
  std::vector<double> w(corpus.n_classes(), 1.0);
  if (!inverse_frequency) return w;
  const auto counts = corpus.class_counts();
  const double n = static_cast<double>(corpus.size());
  const double c = static_cast<double>(corpus.n_classes());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = counts[k] > 0 ? n / (c * static_cast<double>(counts[k])) : 0.0;
  }
  return w;
}

ad::Var batch_loss(FusionModel& model, ad::Tape& tape, std::span<const ModelInput> inputs,
                   std::span<const std::size_t> labels) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw ShapeError("batch_loss: need matching non-empty inputs and labels");
  }
  ad::Var total;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ad::Var l = ad::cross_entropy(model.forward(tape, inputs[i]).logits, labels[i]);
    total = total.valid() ? ad::add(total, l) : l;
  }
  return ad::scale(total, 1.0 / static_cast<double>(inputs.size()));
}

CorpusScore score(const FusionModel& model, const Corpus& corpus) {
  CorpusScore s;
  if (corpus.size() == 0) return s;
  std::vector<std::size_t> preds, labels;
  for (const Sample& smp : corpus.samples) {
    ad::Tape tape(false);
    const auto logits = model.forward(tape, model_input(smp)).logits;
    s.loss += ad::cross_entropy(logits, smp.label).value()[0];
    const auto& z = logits.value().values();
    preds.push_back(static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
    labels.push_back(smp.label);
  }
  s.loss /= static_cast<double>(corpus.size());
  const auto m = compute_metrics(preds, labels, model.config().n_classes);
  s.accuracy = m.accuracy;
  s.macro_f1 = m.macro_f1;
  return s;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0x5711u}));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

namespace {

enum Stream : std::uint64_t { kShuffle = 1, kDropout = 2 };

std::vector<Matrix> snapshot(FusionModel& model) {
  std::vector<Matrix> out;
  for (auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore(FusionModel& model, const std::vector<Matrix>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

TrainHistory train(FusionModel& model, const Corpus& train_set, const Corpus* val_set,
                   const TrainConfig& cfg, OptimizerState* state) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training corpus");
  train_set.validate();
  if (train_set.n_classes() != model.config().n_classes) {
    throw ConfigError("train: corpus has " + std::to_string(train_set.n_classes()) +
                      " classes, model expects " + std::to_string(model.config().n_classes));
  }

  OptimizerState local;
  OptimizerState& st = state ? *state : local;
  auto params = model.parameters();
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->value.rows(), p->value.cols());
      st.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (st.m.size() != params.size()) {
    throw ConfigError("train: optimizer state does not match the model's parameters");
  }

  const auto weights = class_weights(train_set, cfg.class_weighting);
  const std::size_t n = train_set.size();
  TrainHistory history;
  history.initial_train_loss = score(model, train_set).loss;
  std::vector<Matrix> last_good = snapshot(model);

  for (std::size_t epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {kShuffle, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t pos = start; pos < end; ++pos) {
        const Sample& s = train_set.samples[order[pos]];
        std::mt19937_64 drop_rng(derive_seed(cfg.seed, {kDropout, epoch, pos}));
        ad::Tape tape;
        const auto fr = model.forward(tape, model_input(s), &drop_rng);
        const ad::Var loss = ad::cross_entropy(fr.logits, s.label, weights[s.label]);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
          restore(model, last_good);
          throw TrainingAborted("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                ", sample '" + s.id + "'; first non-finite intermediate: " +
                                tape.first_non_finite().value_or("none") +
                                "; parameters restored to the end of epoch " + std::to_string(epoch));
        }
        loss_sum += lv;
        const auto& z = fr.logits.value().values();
        correct += static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == s.label;
        tape.backward(loss, Matrix(1, 1, inv_b));
      }

      ++st.step;
      const double t = static_cast<double>(st.step);
      const double bc1 = 1.0 - std::pow(cfg.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ad::Parameter& p = *params[pi];
        Matrix& m = st.m[pi];
        Matrix& v = st.v[pi];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
          const double g = p.grad[k] + cfg.weight_decay * p.value[k];
          if (cfg.optimizer == OptimizerKind::sgd) {
            p.value[k] = to_storage(p.value[k] - cfg.learning_rate * g);
            continue;
          }
          m[k] = to_storage(cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g);
          v[k] = to_storage(cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g);
          const double mhat = m[k] / bc1;
          const double vhat = v[k] / bc2;
          p.value[k] = to_storage(p.value[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
        if (!p.value.all_finite()) {
          restore(model, last_good);
          throw TrainingAborted("train: parameter '" + p.name + "' became non-finite at epoch " +
                                std::to_string(epoch + 1) + "; parameters restored to the end of epoch " +
                                std::to_string(epoch));
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (val_set && val_set->size() > 0) {
      const auto vs = score(model, *val_set);
      rec.val_loss = vs.loss;
      rec.val_accuracy = vs.accuracy;
      rec.val_macro_f1 = vs.macro_f1;
    }
    history.epochs.push_back(rec);
    st.epochs_done = epoch + 1;
    last_good = snapshot(model);
  }
  history.final_train_loss = score(model, train_set).loss;
  return history;
}

}  // namespace acmg
