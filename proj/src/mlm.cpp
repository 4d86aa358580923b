#include "depmine/mlm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace depmine::mlm {

using Eigen::VectorXd;
using corpus::Vocab;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

// ---------------------------------------------------------------- building blocks

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix* xhat_out, VectorXd* rstd_out) {
  const auto d = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  VectorXd rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  Matrix y = (xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const VectorXd& rstd, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).sum() / d;
    const double m2 = dxhat.row(r).dot(xhat.row(r)) / d;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double top = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - top).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

VectorXd softmax(const Eigen::Ref<const VectorXd>& logits) {
  VectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

// ---------------------------------------------------------------- encoder

struct LayerCache {
  Matrix x_in;
  Matrix a_hat, a;
  VectorXd a_rstd;
  Matrix q, k, v;
  std::vector<Matrix> attn;
  Matrix o;
  Matrix x_mid;
  Matrix b_hat, b;
  VectorXd b_rstd;
  Matrix u, g;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix f_hat;
  VectorXd f_rstd;
};

const Matrix& layer_param(const Params& p, int layer, LayerSlot slot) {
  return p.tensors[static_cast<std::size_t>(TinyMLM::layer_index(layer, slot))];
}

Matrix& layer_param(Params& p, int layer, LayerSlot slot) {
  return p.tensors[static_cast<std::size_t>(TinyMLM::layer_index(layer, slot))];
}

void check_input(const Dims& dims, std::span<const int> ids) {
  if (ids.empty()) throw std::invalid_argument("empty input sequence");
  if (static_cast<int>(ids.size()) > dims.max_len) {
    throw std::invalid_argument("sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                                std::to_string(dims.max_len));
  }
  bool any_real = false;
  for (int id : ids) {
    if (id < 0 || id >= dims.vocab) throw std::invalid_argument("token id outside vocabulary");
    any_real = any_real || id != Vocab::kPad;
  }
  if (!any_real) throw std::invalid_argument("sequence consists only of padding");
}

// Runs the encoder and returns the final-layernorm hidden states.
Matrix encode(const Dims& dims, const Params& p, std::span<const int> ids, ForwardCache* cache) {
  check_input(dims, ids);
  const auto n = static_cast<Eigen::Index>(ids.size());
  const int d = dims.hidden;
  const int dh = d / dims.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(n, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    x.row(t) = p.tensors[TinyMLM::kEmbed].row(ids[t]) + p.tensors[TinyMLM::kPos].row(t);
  }
  if (cache) cache->layers.resize(static_cast<std::size_t>(dims.layers));

  for (int l = 0; l < dims.layers; ++l) {
    LayerCache local;
    LayerCache& c = cache ? cache->layers[static_cast<std::size_t>(l)] : local;
    c.x_in = x;
    c.a = layer_norm(x, layer_param(p, l, kLn1Gain), layer_param(p, l, kLn1Bias), &c.a_hat, &c.a_rstd);
    c.q = c.a * layer_param(p, l, kWq);
    c.q.rowwise() += layer_param(p, l, kBq).row(0);
    c.k = c.a * layer_param(p, l, kWk);
    c.k.rowwise() += layer_param(p, l, kBk).row(0);
    c.v = c.a * layer_param(p, l, kWv);
    c.v.rowwise() += layer_param(p, l, kBv).row(0);
    c.o.resize(n, d);
    c.attn.resize(static_cast<std::size_t>(dims.heads));
    for (int h = 0; h < dims.heads; ++h) {
      Matrix s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (ids[t] == Vocab::kPad) s.col(t).setConstant(-std::numeric_limits<double>::infinity());
      }
      softmax_rows(s);
      c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
      c.attn[static_cast<std::size_t>(h)] = std::move(s);
    }
    Matrix y = c.o * layer_param(p, l, kWo);
    y.rowwise() += layer_param(p, l, kBo).row(0);
    c.x_mid = x + y;
    c.b = layer_norm(c.x_mid, layer_param(p, l, kLn2Gain), layer_param(p, l, kLn2Bias), &c.b_hat, &c.b_rstd);
    c.u = c.b * layer_param(p, l, kW1);
    c.u.rowwise() += layer_param(p, l, kB1).row(0);
    c.g = c.u.unaryExpr([](double v) { return gelu(v); });
    Matrix f = c.g * layer_param(p, l, kW2);
    f.rowwise() += layer_param(p, l, kB2).row(0);
    x = c.x_mid + f;
  }
  const int fg = TinyMLM::kFirstLayer + dims.layers * kLayerSlots;
  if (cache) return layer_norm(x, p.tensors[fg], p.tensors[fg + 1], &cache->f_hat, &cache->f_rstd);
  return layer_norm(x, p.tensors[fg], p.tensors[fg + 1], nullptr, nullptr);
}

// Backpropagates dH (gradient w.r.t. the final hidden states) into `grad`.
void encode_backward(const Dims& dims, const Params& p, std::span<const int> ids, const ForwardCache& cache,
                     const Matrix& dh_final, Params& grad) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  const int d = dims.hidden;
  const int dh = d / dims.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int fg = TinyMLM::kFirstLayer + dims.layers * kLayerSlots;

  Matrix dx = layer_norm_backward(dh_final, cache.f_hat, cache.f_rstd, p.tensors[fg], grad.tensors[fg],
                                  grad.tensors[fg + 1]);
  for (int l = dims.layers - 1; l >= 0; --l) {
    const LayerCache& c = cache.layers[static_cast<std::size_t>(l)];
    // Feed-forward branch.
    const Matrix& df = dx;
    layer_param(grad, l, kW2).noalias() += c.g.transpose() * df;
    layer_param(grad, l, kB2).row(0) += df.colwise().sum();
    Matrix dg = df * layer_param(p, l, kW2).transpose();
    Matrix du = (dg.array() * c.u.unaryExpr([](double v) { return gelu_grad(v); }).array()).matrix();
    layer_param(grad, l, kW1).noalias() += c.b.transpose() * du;
    layer_param(grad, l, kB1).row(0) += du.colwise().sum();
    Matrix db = du * layer_param(p, l, kW1).transpose();
    Matrix dx_mid = dx + layer_norm_backward(db, c.b_hat, c.b_rstd, layer_param(p, l, kLn2Gain),
                                             layer_param(grad, l, kLn2Gain), layer_param(grad, l, kLn2Bias));
    // Attention branch.
    const Matrix& dy = dx_mid;
    layer_param(grad, l, kWo).noalias() += c.o.transpose() * dy;
    layer_param(grad, l, kBo).row(0) += dy.colwise().sum();
    Matrix d_o = dy * layer_param(p, l, kWo).transpose();
    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < dims.heads; ++h) {
      const Matrix& a = c.attn[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = a.transpose() * doh;
      Matrix da = doh * c.v.middleCols(h * dh, dh).transpose();
      Matrix ds(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double inner = da.row(r).dot(a.row(r));
        ds.row(r) = (a.row(r).array() * (da.row(r).array() - inner)).matrix();
      }
      dq.middleCols(h * dh, dh) = (ds * c.k.middleCols(h * dh, dh)) * scale;
      dk.middleCols(h * dh, dh) = (ds.transpose() * c.q.middleCols(h * dh, dh)) * scale;
    }
    layer_param(grad, l, kWq).noalias() += c.a.transpose() * dq;
    layer_param(grad, l, kBq).row(0) += dq.colwise().sum();
    layer_param(grad, l, kWk).noalias() += c.a.transpose() * dk;
    layer_param(grad, l, kBk).row(0) += dk.colwise().sum();
    layer_param(grad, l, kWv).noalias() += c.a.transpose() * dv;
    layer_param(grad, l, kBv).row(0) += dv.colwise().sum();
    Matrix da_in = dq * layer_param(p, l, kWq).transpose() + dk * layer_param(p, l, kWk).transpose() +
                   dv * layer_param(p, l, kWv).transpose();
    dx = dx_mid + layer_norm_backward(da_in, c.a_hat, c.a_rstd, layer_param(p, l, kLn1Gain),
                                      layer_param(grad, l, kLn1Gain), layer_param(grad, l, kLn1Bias));
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    grad.tensors[TinyMLM::kEmbed].row(ids[t]) += dx.row(t);
    grad.tensors[TinyMLM::kPos].row(t) += dx.row(t);
  }
}

void fill_normal(Matrix& m, Rng& rng, double sd) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal() * sd;
  }
}

}  // namespace

// ---------------------------------------------------------------- Params

std::size_t Params::n_scalars() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += static_cast<std::size_t>(t.size());
  return total;
}

Params Params::zeros_like() const {
  Params out;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.push_back(Matrix::Zero(t.rows(), t.cols()));
  return out;
}

void Params::set_zero() {
  for (auto& t : tensors) t.setZero();
}

bool Params::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Matrix& t) { return t.allFinite(); });
}

void Dims::validate() const {
  if (vocab < Vocab::kNumSpecials + 1) throw std::invalid_argument("vocab too small");
  if (layers < 1 || hidden < 1 || heads < 1 || ffn < 1 || max_len < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (hidden % heads != 0) throw std::invalid_argument("hidden size must be divisible by the head count");
}

// ---------------------------------------------------------------- TinyMLM

TinyMLM::TinyMLM(const Dims& dims, std::uint64_t seed) : dims_(dims) {
  dims.validate();
  Rng rng = Rng(seed).split(11);
  const int d = dims.hidden;
  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid_sd = proj_sd / std::sqrt(2.0 * dims.layers);
  auto add = [&](std::string name, int rows, int cols, double sd, double fill) {
    Matrix m(rows, cols);
    if (sd > 0.0) {
      fill_normal(m, rng, sd);
    } else {
      m.setConstant(fill);
    }
    params_.names.push_back(std::move(name));
    params_.tensors.push_back(std::move(m));
  };
  add("embed", dims.vocab, d, 0.02, 0.0);
  add("pos", dims.max_len, d, 0.02, 0.0);
  add("out_bias", 1, dims.vocab, 0.0, 0.0);
  for (int l = 0; l < dims.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "ln1_gain", 1, d, 0.0, 1.0);
    add(pre + "ln1_bias", 1, d, 0.0, 0.0);
    add(pre + "wq", d, d, proj_sd, 0.0);
    add(pre + "bq", 1, d, 0.0, 0.0);
    add(pre + "wk", d, d, proj_sd, 0.0);
    add(pre + "bk", 1, d, 0.0, 0.0);
    add(pre + "wv", d, d, proj_sd, 0.0);
    add(pre + "bv", 1, d, 0.0, 0.0);
    add(pre + "wo", d, d, resid_sd, 0.0);
    add(pre + "bo", 1, d, 0.0, 0.0);
    add(pre + "ln2_gain", 1, d, 0.0, 1.0);
    add(pre + "ln2_bias", 1, d, 0.0, 0.0);
    add(pre + "w1", d, dims.ffn, proj_sd, 0.0);
    add(pre + "b1", 1, dims.ffn, 0.0, 0.0);
    add(pre + "w2", dims.ffn, d, 1.0 / std::sqrt(static_cast<double>(dims.ffn) * 2.0 * dims.layers), 0.0);
    add(pre + "b2", 1, d, 0.0, 0.0);
  }
  add("final_ln_gain", 1, d, 0.0, 1.0);
  add("final_ln_bias", 1, d, 0.0, 0.0);
}

Matrix TinyMLM::hidden(std::span<const int> ids) const { return encode(dims_, params_, ids, nullptr); }

Matrix TinyMLM::forward_mlm(std::span<const int> ids) const {
  Matrix logits = hidden(ids) * params_.tensors[kEmbed].transpose();
  logits.rowwise() += params_.tensors[kOutBias].row(0);
  softmax_rows(logits);
  return logits;
}

VectorXd TinyMLM::predict(std::span<const int> ids, int position) const {
  if (position < 0 || position >= static_cast<int>(ids.size())) throw std::out_of_range("predict: position");
  const Matrix h = hidden(ids);
  const VectorXd logits =
      params_.tensors[kEmbed] * h.row(position).transpose() + params_.tensors[kOutBias].row(0).transpose();
  return softmax(logits);
}

// ---------------------------------------------------------------- losses

double mlm_loss_and_grad(const TinyMLM& model, std::span<const MaskedExample> batch, Params* grad) {
  const Dims& dims = model.dims();
  const Params& p = model.params();
  std::size_t n_targets = 0;
  for (const auto& ex : batch) {
    if (ex.positions.empty() || ex.positions.size() != ex.targets.size()) {
      throw std::invalid_argument("every batch item needs at least one masked position with a target");
    }
    n_targets += ex.positions.size();
  }
  if (n_targets == 0) throw std::invalid_argument("empty batch");
  if (grad) {
    if (grad->size() != p.size()) *grad = p.zeros_like();
    grad->set_zero();
  }
  const double inv_n = 1.0 / static_cast<double>(n_targets);
  const Matrix& embed = p.tensors[TinyMLM::kEmbed];
  const Matrix& out_bias = p.tensors[TinyMLM::kOutBias];

  double loss = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    for (std::size_t m = 0; m < ex.positions.size(); ++m) {
      const int pos = ex.positions[m];
      if (pos < 0 || pos >= static_cast<int>(ex.ids.size())) throw std::out_of_range("masked position");
      if (ex.ids[static_cast<std::size_t>(pos)] != Vocab::kMask) {
        throw std::invalid_argument("target given at an unmasked position " + std::to_string(pos));
      }
      if (ex.targets[m] < 0 || ex.targets[m] >= dims.vocab) throw std::invalid_argument("target id outside vocabulary");
    }
    const Matrix h = encode(dims, p, ex.ids, grad ? &cache : nullptr);
    Matrix dh = grad ? Matrix::Zero(h.rows(), h.cols()) : Matrix();
    for (std::size_t m = 0; m < ex.positions.size(); ++m) {
      const int pos = ex.positions[m];
      const VectorXd logits = embed * h.row(pos).transpose() + out_bias.row(0).transpose();
      const double top = logits.maxCoeff();
      const double lse = top + std::log((logits.array() - top).exp().sum());
      loss -= (logits(ex.targets[m]) - lse) * inv_n;
      if (grad) {
        VectorXd dlogits = (logits.array() - lse).exp().matrix();
        dlogits(ex.targets[m]) -= 1.0;
        dlogits *= inv_n;
        grad->tensors[TinyMLM::kEmbed].noalias() += dlogits * h.row(pos);
        grad->tensors[TinyMLM::kOutBias].row(0) += dlogits.transpose();
        dh.row(pos) += (embed.transpose() * dlogits).transpose();
      }
    }
    if (grad) encode_backward(dims, p, ex.ids, cache, dh, *grad);
  }
  return loss;
}

ClassifierHead::ClassifierHead(int hidden, int n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw std::invalid_argument("classifier needs at least two classes");
  Rng rng = Rng(seed).split(13);
  weight.resize(hidden, n_classes);
  fill_normal(weight, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  bias = Matrix::Zero(1, n_classes);
}

namespace {

void check_cls(const LabeledIds& ex, int n_classes) {
  if (ex.ids.empty() || ex.ids.front() != Vocab::kCls) throw std::invalid_argument("classifier input must start with CLS");
  if (ex.label < 0 || ex.label >= n_classes) throw std::invalid_argument("label outside 0..C-1");
}

}  // namespace

VectorXd class_probs(const TinyMLM& model, const ClassifierHead& head, std::span<const int> ids) {
  const Matrix h = model.hidden(ids);
  return softmax(head.weight.transpose() * h.row(0).transpose() + head.bias.row(0).transpose());
}

int predict_label(const TinyMLM& model, const ClassifierHead& head, std::span<const int> ids) {
  const VectorXd probs = class_probs(model, head, ids);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

double accuracy(const TinyMLM& model, const ClassifierHead& head, std::span<const LabeledIds> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : data) hits += predict_label(model, head, ex.ids) == ex.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double classify_loss_and_grad(const TinyMLM& model, const ClassifierHead& head, std::span<const LabeledIds> batch,
                              Params* model_grad, ClassifierHead* head_grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Dims& dims = model.dims();
  const Params& p = model.params();
  if (model_grad) {
    if (model_grad->size() != p.size()) *model_grad = p.zeros_like();
    model_grad->set_zero();
  }
  if (head_grad) {
    head_grad->weight = Matrix::Zero(head.weight.rows(), head.weight.cols());
    head_grad->bias = Matrix::Zero(1, head.bias.cols());
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    check_cls(ex, head.n_classes());
    const Matrix h = encode(dims, p, ex.ids, model_grad ? &cache : nullptr);
    const VectorXd logits = head.weight.transpose() * h.row(0).transpose() + head.bias.row(0).transpose();
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    loss -= (logits(ex.label) - lse) * inv_n;
    VectorXd dlogits = (logits.array() - lse).exp().matrix();
    dlogits(ex.label) -= 1.0;
    dlogits *= inv_n;
    if (head_grad) {
      head_grad->weight.noalias() += h.row(0).transpose() * dlogits.transpose();
      head_grad->bias.row(0) += dlogits.transpose();
    }
    if (model_grad) {
      Matrix dh = Matrix::Zero(h.rows(), h.cols());
      dh.row(0) = (head.weight * dlogits).transpose();
      encode_backward(dims, p, ex.ids, cache, dh, *model_grad);
    }
  }
  return loss;
}

// ---------------------------------------------------------------- optimization

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw std::invalid_argument("final_lr_fraction must lie in (0, 1]");
  }
}

Adam::Adam(std::vector<Matrix*> tensors, const TrainConfig& cfg)
    : tensors_(std::move(tensors)), lr_(cfg.lr), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (const Matrix* t : tensors_) {
    m_.push_back(Matrix::Zero(t->rows(), t->cols()));
    v_.push_back(Matrix::Zero(t->rows(), t->cols()));
  }
}

void Adam::step(const std::vector<const Matrix*>& grads) {
  if (grads.size() != tensors_.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    const Matrix& g = *grads[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
    tensors_[k]->array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
  }
}

namespace {

std::vector<Matrix*> tensor_ptrs(Params& p) {
  std::vector<Matrix*> out;
  for (auto& t : p.tensors) out.push_back(&t);
  return out;
}

std::vector<const Matrix*> tensor_ptrs(const Params& p) {
  std::vector<const Matrix*> out;
  for (const auto& t : p.tensors) out.push_back(&t);
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  return order;
}

}  // namespace

TrainResult train_mlm(TinyMLM& model, const std::vector<corpus::Sentence>& corpus,
                      const masking::MaskStrategy& strategy, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_mlm: empty corpus");
  Rng order_rng = Rng(cfg.seed).split(21);
  Rng mask_rng = Rng(cfg.seed).split(22);
  Adam adam(tensor_ptrs(model.params()), cfg);
  Params grad = model.params().zeros_like();
  const auto grad_ptrs = tensor_ptrs(static_cast<const Params&>(grad));

  const std::size_t batches_per_epoch = (corpus.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                        static_cast<std::size_t>(cfg.batch_size);
  const double total_steps = static_cast<double>(batches_per_epoch) * cfg.epochs;

  TrainResult result;
  std::vector<MaskedExample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(corpus.size(), order_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_targets = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      std::size_t n_targets = 0;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = start; k < stop; ++k) {
        const auto& sentence = corpus[order[k]];
        MaskedExample ex;
        ex.positions = strategy.sample(sentence, mask_rng);
        for (int pos : ex.positions) ex.targets.push_back(sentence.ids[static_cast<std::size_t>(pos)]);
        ex.ids = masking::apply_mask(sentence.ids, ex.positions);
        n_targets += ex.positions.size();
        batch.push_back(std::move(ex));
      }
      const double loss = mlm_loss_and_grad(model, batch, &grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw TrainingAborted("non-finite MLM loss", epoch, batch_index);
      }
      const double progress = static_cast<double>(adam.steps()) / total_steps;
      adam.set_lr(cfg.lr * (1.0 - (1.0 - cfg.final_lr_fraction) * progress));
      adam.step(grad_ptrs);
      epoch_loss += loss * static_cast<double>(n_targets);
      epoch_targets += n_targets;
      ++batch_index;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_targets));
  }
  return result;
}

FinetuneResult finetune(TinyMLM& model, const std::vector<LabeledIds>& train, const std::vector<LabeledIds>& dev,
                        int n_classes, const TrainConfig& cfg, bool freeze_encoder) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw std::invalid_argument("finetune: empty train or dev set");
  std::set<int> labels;
  for (const auto& ex : train) {
    check_cls(ex, n_classes);
    labels.insert(ex.label);
  }
  for (const auto& ex : dev) check_cls(ex, n_classes);
  if (labels.size() < 2) throw std::invalid_argument("finetune: training set contains a single class");

  FinetuneResult result;
  result.head = ClassifierHead(model.dims().hidden, n_classes, cfg.seed);
  Rng order_rng = Rng(cfg.seed).split(31);

  std::vector<Matrix*> tensors;
  if (!freeze_encoder) tensors = tensor_ptrs(model.params());
  tensors.push_back(&result.head.weight);
  tensors.push_back(&result.head.bias);
  Adam adam(tensors, cfg);

  Params grad = model.params().zeros_like();
  ClassifierHead head_grad;
  std::vector<const Matrix*> grads;
  if (!freeze_encoder) grads = tensor_ptrs(static_cast<const Params&>(grad));

  Params best_params = model.params();
  ClassifierHead best_head = result.head;
  result.dev_accuracy = accuracy(model, result.head, dev);
  result.best_epoch = 0;
  int since_best = 0;
  std::vector<LabeledIds> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(train.size(), order_rng);
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = start; k < stop; ++k) batch.push_back(train[order[k]]);
      const double loss =
          classify_loss_and_grad(model, result.head, batch, freeze_encoder ? nullptr : &grad, &head_grad);
      if (!std::isfinite(loss)) throw TrainingAborted("non-finite finetuning loss", epoch, batch_index);
      std::vector<const Matrix*> all = grads;
      all.push_back(&head_grad.weight);
      all.push_back(&head_grad.bias);
      adam.step(all);
      ++batch_index;
    }
    const double acc = accuracy(model, result.head, dev);
    result.dev_curve.push_back(acc);
    if (acc > result.dev_accuracy) {
      result.dev_accuracy = acc;
      result.best_epoch = epoch;
      best_params = model.params();
      best_head = result.head;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.params() = std::move(best_params);
  result.head = std::move(best_head);
  return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'E', 'P', 'M', 'L', 'M', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return value;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_le<double>(out, m(r, c));
  }
}

void read_matrix(std::istream& in, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_le<double>(in);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TinyMLM& model, std::uint64_t vocab_hash,
                     const ClassifierHead* head) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  const Dims& d = model.dims();
  for (int v : {d.vocab, d.layers, d.hidden, d.heads, d.ffn, d.max_len}) write_le<std::int32_t>(out, v);
  write_le<std::uint64_t>(out, vocab_hash);
  for (const auto& t : model.params().tensors) write_matrix(out, t);
  write_le<std::int32_t>(out, head ? head->n_classes() : 0);
  if (head) {
    write_matrix(out, head->weight);
    write_matrix(out, head->bias);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a checkpoint file");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Dims d;
  d.vocab = read_le<std::int32_t>(in);
  d.layers = read_le<std::int32_t>(in);
  d.hidden = read_le<std::int32_t>(in);
  d.heads = read_le<std::int32_t>(in);
  d.ffn = read_le<std::int32_t>(in);
  d.max_len = read_le<std::int32_t>(in);
  Checkpoint ck{TinyMLM(d, 0), read_le<std::uint64_t>(in), std::nullopt};
  for (auto& t : ck.model.params().tensors) read_matrix(in, t);
  const auto n_classes = read_le<std::int32_t>(in);
  if (n_classes > 0) {
    ClassifierHead head;
    head.weight.resize(d.hidden, n_classes);
    head.bias.resize(1, n_classes);
    read_matrix(in, head.weight);
    read_matrix(in, head.bias);
    ck.head = std::move(head);
  }
  return ck;
}

}  // namespace depmine::mlm
