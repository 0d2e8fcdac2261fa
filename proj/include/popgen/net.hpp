/**
 * @file net.hpp
 * @brief Two-layer LSTM stacks with a linear softmax head, truncated BPTT,
 *        Adam, and the "PGN1" checkpoint format.
 *
 * Each gate matrix acts on the concatenation [x, h_prev, 1]; the trailing
 * constant column carries the bias. Everything is computed in double
 * precision; checkpoints store 32-bit floats.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "popgen/bytes.hpp"
#include "popgen/error.hpp"
#include "popgen/random.hpp"

namespace popgen::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInitRange = 0.08;

/// Shape-checked exact equality (Eigen asserts on mismatched shapes).
inline bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

struct LstmCellParams {
  Matrix w_forget, w_input, w_output, w_cell;  // hidden x (input + hidden + 1)

  LstmCellParams() = default;
  LstmCellParams(int input_dim, int hidden_dim) {
    for (Matrix* m : {&w_forget, &w_input, &w_output, &w_cell}) m->setZero(hidden_dim, input_dim + hidden_dim + 1);
  }

  int hidden_dim() const { return static_cast<int>(w_forget.rows()); }
  int input_dim() const { return static_cast<int>(w_forget.cols()) - hidden_dim() - 1; }

  friend bool operator==(const LstmCellParams& a, const LstmCellParams& b) {
    return same(a.w_forget, b.w_forget) && same(a.w_input, b.w_input) && same(a.w_output, b.w_output) &&
           same(a.w_cell, b.w_cell);
  }
};

/// Two LSTM layers and the output embedding V (classes x hidden).
struct LstmStack {
  LstmCellParams layer1, layer2;
  Matrix output;

  LstmStack() = default;
  LstmStack(int input_dim, int hidden_dim, int num_classes)
      : layer1(input_dim, hidden_dim), layer2(hidden_dim, hidden_dim), output(Matrix::Zero(num_classes, hidden_dim)) {}

  int input_dim() const { return layer1.input_dim(); }
  int hidden_dim() const { return layer1.hidden_dim(); }
  int num_classes() const { return static_cast<int>(output.rows()); }

  friend bool operator==(const LstmStack& a, const LstmStack& b) {
    return a.layer1 == b.layer1 && a.layer2 == b.layer2 && same(a.output, b.output);
  }
};

/// Visits the nine parameter matrices in checkpoint order: layer-1
/// forget/input/output/cell, layer-2 forget/input/output/cell, output.
template <typename Stack, typename F>
void for_each_matrix(Stack& s, F&& f) {
  f(s.layer1.w_forget);
  f(s.layer1.w_input);
  f(s.layer1.w_output);
  f(s.layer1.w_cell);
  f(s.layer2.w_forget);
  f(s.layer2.w_input);
  f(s.layer2.w_output);
  f(s.layer2.w_cell);
  f(s.output);
}

template <typename F>
void for_each_matrix_pair(LstmStack& a, const LstmStack& b, F&& f) {
  std::vector<const Matrix*> bs;
  for_each_matrix(b, [&](const Matrix& m) { bs.push_back(&m); });
  std::size_t i = 0;
  for_each_matrix(a, [&](Matrix& m) { f(m, *bs[i++]); });
}

inline std::size_t parameter_count(const LstmStack& s) {
  std::size_t n = 0;
  for_each_matrix(s, [&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

/// Uniform init in [-0.08, 0.08], drawn row-major in checkpoint order.
inline void initialize_uniform(LstmStack& s, std::uint64_t seed) {
  Rng rng(seed);
  for_each_matrix(s, [&](Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = uniform_real(rng, -kInitRange, kInitRange);
    }
  });
}

inline LstmStack make_stack(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed) {
  LstmStack s(input_dim, hidden_dim, num_classes);
  initialize_uniform(s, seed);
  return s;
}

/// Rounds every parameter to the nearest 32-bit float.
inline void round_to_f32(LstmStack& s) {
  for_each_matrix(s, [](Matrix& m) { m = m.cast<float>().cast<double>(); });
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Intermediate values of one cell step, kept for backpropagation.
struct CellCache {
  Vector z;  // [x, h_prev, 1]
  Vector f, i, o, g;
  Vector c_prev, c, tanh_c;
};

struct CellOutput {
  Vector h, c;
};

inline Vector concat_input(const Vector& x, const Vector& h_prev) {
  Vector z(x.size() + h_prev.size() + 1);
  z << x, h_prev, 1.0;
  return z;
}

inline CellOutput lstm_cell_step(const LstmCellParams& p, const Vector& x, const Vector& h_prev, const Vector& c_prev,
                                 CellCache* cache = nullptr) {
  if (x.size() != p.input_dim() || h_prev.size() != p.hidden_dim() || c_prev.size() != p.hidden_dim()) {
    throw ShapeError("lstm_cell_step: expected input " + std::to_string(p.input_dim()) + " and state " +
                     std::to_string(p.hidden_dim()) + ", got " + std::to_string(x.size()) + "/" +
                     std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size()));
  }
  Vector z = concat_input(x, h_prev);
  Vector f = (p.w_forget * z).unaryExpr(&sigmoid);
  Vector i = (p.w_input * z).unaryExpr(&sigmoid);
  Vector o = (p.w_output * z).unaryExpr(&sigmoid);
  Vector g = (p.w_cell * z).array().tanh().matrix();
  Vector c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Vector tanh_c = c.array().tanh().matrix();
  CellOutput out{o.cwiseProduct(tanh_c), c};
  if (cache) {
    *cache = CellCache{std::move(z), std::move(f), std::move(i), std::move(o), std::move(g), c_prev, out.c, std::move(tanh_c)};
  }
  return out;
}

/// Recurrent state of a stack during inference.
struct StackState {
  Vector h1, c1, h2, c2;

  static StackState zeros(const LstmStack& s) {
    const int h = s.hidden_dim();
    return {Vector::Zero(h), Vector::Zero(h), Vector::Zero(h), Vector::Zero(h)};
  }
};

/// One step; updates `state` and returns the class logits V h2.
inline Vector step(const LstmStack& s, StackState& state, const Vector& x) {
  CellOutput a = lstm_cell_step(s.layer1, x, state.h1, state.c1);
  CellOutput b = lstm_cell_step(s.layer2, a.h, state.h2, state.c2);
  state = {std::move(a.h), std::move(a.c), std::move(b.h), std::move(b.c)};
  return s.output * state.h2;
}

/// Per-step logits for a whole sequence starting from zero state.
inline std::vector<Vector> forward_sequence(const LstmStack& s, std::span<const Vector> inputs) {
  if (inputs.empty()) throw ShapeError("forward_sequence: empty input sequence");
  StackState st = StackState::zeros(s);
  std::vector<Vector> logits;
  logits.reserve(inputs.size());
  for (const Vector& x : inputs) logits.push_back(step(s, st, x));
  return logits;
}

inline Vector softmax(const Vector& logits, double temperature = 1.0) {
  const Vector scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  Vector p = (scaled.array() - m).exp().matrix();
  return p / p.sum();
}

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

inline double cross_entropy(const Vector& logits, int target) { return log_sum_exp(logits) - logits(target); }

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Accumulates parameter gradients for one cell step. `dh`/`dc` are the
/// gradients flowing into h and c; returns gradients w.r.t. x, h_prev, c_prev.
struct CellBackward {
  Vector dx, dh_prev, dc_prev;
};

inline CellBackward lstm_cell_backward(const LstmCellParams& p, const CellCache& k, const Vector& dh, const Vector& dc,
                                       LstmCellParams& grad) {
  const Vector d_o = dh.cwiseProduct(k.tanh_c);
  const Vector dc_total = dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix());
  const Vector df = dc_total.cwiseProduct(k.c_prev);
  const Vector di = dc_total.cwiseProduct(k.g);
  const Vector dg = dc_total.cwiseProduct(k.i);

  const Vector af = df.array() * k.f.array() * (1.0 - k.f.array());
  const Vector ai = di.array() * k.i.array() * (1.0 - k.i.array());
  const Vector ao = d_o.array() * k.o.array() * (1.0 - k.o.array());
  const Vector ag = dg.array() * (1.0 - k.g.array().square());

  grad.w_forget.noalias() += af * k.z.transpose();
  grad.w_input.noalias() += ai * k.z.transpose();
  grad.w_output.noalias() += ao * k.z.transpose();
  grad.w_cell.noalias() += ag * k.z.transpose();

  Vector dz = p.w_forget.transpose() * af;
  dz.noalias() += p.w_input.transpose() * ai;
  dz.noalias() += p.w_output.transpose() * ao;
  dz.noalias() += p.w_cell.transpose() * ag;

  const int in = p.input_dim();
  const int hid = p.hidden_dim();
  return {dz.head(in), dz.segment(in, hid), dc_total.cwiseProduct(k.f)};
}

/// A training sequence: dense inputs and target class per step.
struct Sequence {
  std::vector<Vector> inputs;
  std::vector<int> targets;
};

struct ChunkResult {
  double loss_sum = 0.0;  // summed cross-entropy over the chunk
  std::size_t steps = 0;
};

/// Forward + backward over steps [begin, end) of `seq`, starting from
/// `state` (updated to the state after `end`). Gradients of the summed
/// cross-entropy times `scale` are added to `grad`.
inline ChunkResult chunk_gradients(const LstmStack& s, const Sequence& seq, std::size_t begin, std::size_t end,
                                   StackState& state, LstmStack& grad, double scale) {
  const std::size_t n = end - begin;
  std::vector<CellCache> k1(n), k2(n);
  std::vector<Vector> h2(n), probs(n);
  ChunkResult res;
  for (std::size_t t = 0; t < n; ++t) {
    const int target = seq.targets[begin + t];
    if (target < 0 || target >= s.num_classes()) throw EncodingError("target class out of range");
    CellOutput a = lstm_cell_step(s.layer1, seq.inputs[begin + t], state.h1, state.c1, &k1[t]);
    CellOutput b = lstm_cell_step(s.layer2, a.h, state.h2, state.c2, &k2[t]);
    state = {std::move(a.h), std::move(a.c), b.h, std::move(b.c)};
    h2[t] = std::move(b.h);
    const Vector logits = s.output * h2[t];
    res.loss_sum += cross_entropy(logits, target);
    probs[t] = softmax(logits);
  }
  res.steps = n;

  const int hid = s.hidden_dim();
  Vector dh1 = Vector::Zero(hid), dc1 = Vector::Zero(hid), dh2 = Vector::Zero(hid), dc2 = Vector::Zero(hid);
  for (std::size_t t = n; t-- > 0;) {
    Vector dlogits = probs[t];
    dlogits(seq.targets[begin + t]) -= 1.0;
    dlogits *= scale;
    grad.output.noalias() += dlogits * h2[t].transpose();
    Vector dh_top = s.output.transpose() * dlogits;
    dh_top += dh2;
    CellBackward b2 = lstm_cell_backward(s.layer2, k2[t], dh_top, dc2, grad.layer2);
    dh2 = std::move(b2.dh_prev);
    dc2 = std::move(b2.dc_prev);
    Vector dh_low = b2.dx + dh1;
    CellBackward b1 = lstm_cell_backward(s.layer1, k1[t], dh_low, dc1, grad.layer1);
    dh1 = std::move(b1.dh_prev);
    dc1 = std::move(b1.dc_prev);
  }
  return res;
}

inline LstmStack zeros_like(const LstmStack& s) { return LstmStack(s.input_dim(), s.hidden_dim(), s.num_classes()); }

/// Mean cross-entropy of a full sequence and its exact gradient (no truncation).
inline std::pair<double, LstmStack> loss_and_gradients(const LstmStack& s, const Sequence& seq) {
  LstmStack grad = zeros_like(s);
  StackState st = StackState::zeros(s);
  const double scale = 1.0 / static_cast<double>(seq.inputs.size());
  const ChunkResult r = chunk_gradients(s, seq, 0, seq.inputs.size(), st, grad, scale);
  return {r.loss_sum * scale, std::move(grad)};
}

/// Mean per-step cross-entropy without gradients.
inline double sequence_loss(const LstmStack& s, const Sequence& seq) {
  StackState st = StackState::zeros(s);
  double total = 0.0;
  for (std::size_t t = 0; t < seq.inputs.size(); ++t) total += cross_entropy(step(s, st, seq.inputs[t]), seq.targets[t]);
  return total / static_cast<double>(seq.inputs.size());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> first, second;  // one per parameter matrix, checkpoint order
  std::uint64_t step = 0;
  double learning_rate = 2e-3;
  double decay = 0.99;  // multiplied into learning_rate after each epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_stack(const LstmStack& s, double lr = 2e-3, double decay = 0.99) {
    AdamState a;
    a.learning_rate = lr;
    a.decay = decay;
    for_each_matrix(s, [&](const Matrix& m) {
      a.first.push_back(Matrix::Zero(m.rows(), m.cols()));
      a.second.push_back(Matrix::Zero(m.rows(), m.cols()));
    });
    return a;
  }

  void apply(LstmStack& s, const LstmStack& grad) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::size_t i = 0;
    for_each_matrix_pair(s, grad, [&](Matrix& p, const Matrix& g) {
      Matrix& m = first[i];
      Matrix& v = second[i];
      ++i;
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
    });
  }

  void end_epoch() { learning_rate *= decay; }

  void round_to_f32() {
    for (auto* ms : {&first, &second}) {
      for (Matrix& m : *ms) m = m.cast<float>().cast<double>();
    }
  }

  friend bool operator==(const AdamState& a, const AdamState& b) {
    auto eq = [](const std::vector<Matrix>& x, const std::vector<Matrix>& y) {
      return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same);
    };
    return eq(a.first, b.first) && eq(a.second, b.second) && a.step == b.step && a.learning_rate == b.learning_rate &&
           a.decay == b.decay && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.epsilon == b.epsilon;
  }
};

struct TrainOptions {
  std::size_t bptt = 64;  // truncation length in steps
};

/// One pass over `batches` in the given order. Each BPTT chunk of a sequence
/// is one Adam step on the chunk's mean cross-entropy; hidden state carries
/// across chunks of the same sequence. Returns the mean per-step loss
/// measured before each update, then decays the learning rate.
inline double train_epoch(LstmStack& s, AdamState& adam, std::span<const Sequence> batches, const TrainOptions& opt = {}) {
  double total = 0.0;
  std::size_t steps = 0;
  std::size_t batch_index = 0;
  for (const Sequence& seq : batches) {
    if (seq.inputs.size() != seq.targets.size()) throw ShapeError("sequence inputs/targets length mismatch");
    StackState st = StackState::zeros(s);
    for (std::size_t begin = 0; begin < seq.inputs.size(); begin += opt.bptt, ++batch_index) {
      const std::size_t end = std::min(seq.inputs.size(), begin + opt.bptt);
      LstmStack grad = zeros_like(s);
      const ChunkResult r = chunk_gradients(s, seq, begin, end, st, grad, 1.0 / static_cast<double>(end - begin));
      if (!std::isfinite(r.loss_sum)) {
        throw DivergenceError(batch_index, "non-finite loss in batch " + std::to_string(batch_index));
      }
      total += r.loss_sum;
      steps += r.steps;
      adam.apply(s, grad);
    }
  }
  adam.end_epoch();
  return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares loss_and_gradients against central differences for every
/// parameter. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckReport gradient_check(const LstmStack& s, const Sequence& seq, double h = 1e-5, double floor = 1e-6) {
  const LstmStack analytic = loss_and_gradients(s, seq).second;
  LstmStack probe = s;
  std::vector<const Matrix*> grads;
  for_each_matrix(analytic, [&](const Matrix& m) { grads.push_back(&m); });
  GradCheckReport rep;
  std::size_t mi = 0;
  for_each_matrix(probe, [&](Matrix& m) {
    const Matrix& g = *grads[mi++];
    for (Eigen::Index idx = 0; idx < m.size(); ++idx) {
      const double orig = m.data()[idx];
      m.data()[idx] = orig + h;
      const double up = sequence_loss(probe, seq);
      m.data()[idx] = orig - h;
      const double down = sequence_loss(probe, seq);
      m.data()[idx] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.data()[idx];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      rep.max_relative_error = std::max(rep.max_relative_error, rel);
      ++rep.checked;
    }
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using CheckpointMeta = std::map<std::string, std::string>;

struct Checkpoint {
  LstmStack stack;
  AdamState adam;
  CheckpointMeta meta;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "PGN1", u16 version, u32 input/hidden1/hidden2/classes, u64 adam step,
/// f64 lr/decay/beta1/beta2/epsilon, u32 meta count + (str16 key, str32
/// value) pairs, then the nine parameter matrices, the nine first-moment and
/// the nine second-moment matrices, each row-major f32.
inline std::vector<std::uint8_t> save_checkpoint(const LstmStack& s, const AdamState& adam, const CheckpointMeta& meta) {
  ByteWriter w;
  w.magic("PGN1");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(s.input_dim()));
  w.u32(static_cast<std::uint32_t>(s.layer1.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(s.layer2.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(s.num_classes()));
  w.u64(adam.step);
  for (double v : {adam.learning_rate, adam.decay, adam.beta1, adam.beta2, adam.epsilon}) w.f64(v);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str16(k);
    w.str32(v);
  }
  auto put = [&](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
    }
  };
  for_each_matrix(s, put);
  for (const auto* ms : {&adam.first, &adam.second}) {
    if (ms->size() != 9) throw CheckpointError("adam state does not match stack");
    for (const Matrix& m : *ms) put(m);
  }
  return std::move(w).take();
}

inline Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader<CheckpointError> r(bytes, "checkpoint");
  r.expect_magic("PGN1");
  if (r.u16() != kCheckpointVersion) r.fail("unsupported checkpoint version");
  const std::uint32_t in = r.u32(), h1 = r.u32(), h2 = r.u32(), classes = r.u32();
  if (in == 0 || h1 == 0 || h1 != h2 || classes == 0 || in > 1u << 16 || h1 > 1u << 14 || classes > 1u << 16) {
    r.fail("bad dimensions");
  }
  Checkpoint ck;
  ck.stack = LstmStack(static_cast<int>(in), static_cast<int>(h1), static_cast<int>(classes));
  ck.adam = AdamState::for_stack(ck.stack);
  ck.adam.step = r.u64();
  ck.adam.learning_rate = r.f64();
  ck.adam.decay = r.f64();
  ck.adam.beta1 = r.f64();
  ck.adam.beta2 = r.f64();
  ck.adam.epsilon = r.f64();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str16();
    ck.meta[k] = r.str32();
  }
  auto get = [&](Matrix& m) {
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(row, c) = static_cast<double>(r.f32());
    }
  };
  for_each_matrix(ck.stack, get);
  for (auto* ms : {&ck.adam.first, &ck.adam.second}) {
    for (Matrix& m : *ms) get(m);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return ck;
}

}  // namespace popgen::net
