#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depmine/corpus.hpp"
#include "depmine/masking.hpp"
#include "depmine/rng.hpp"

namespace depmine::mlm {

using Matrix = Eigen::MatrixXd;

struct Dims {
  int vocab = 0;
  int layers = 2;
  int hidden = 64;
  int heads = 2;
  int ffn = 64;
  int max_len = 32;

  void validate() const;
  bool operator==(const Dims&) const = default;
};

/// Named parameter tensors in a fixed declared order. Biases and layernorm
/// vectors are stored as 1 x n matrices.
struct Params {
  std::vector<std::string> names;
  std::vector<Matrix> tensors;

  std::size_t size() const { return tensors.size(); }
  std::size_t n_scalars() const;
  /// Same names and shapes, all zeros.
  Params zeros_like() const;
  void set_zero();
  bool all_finite() const;
};

/// Slot order of the per-layer tensors inside Params.
enum LayerSlot : int {
  kLn1Gain, kLn1Bias, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
  kLn2Gain, kLn2Bias, kW1, kB1, kW2, kB2, kLayerSlots
};

/// Pre-layernorm transformer encoder with tied input/output embeddings.
/// Global tensors: embed (V x d), pos (max_len x d), out_bias (1 x V);
/// then kLayerSlots tensors per layer; then the final layernorm gain/bias.
class TinyMLM {
 public:
  static constexpr int kEmbed = 0;
  static constexpr int kPos = 1;
  static constexpr int kOutBias = 2;
  static constexpr int kFirstLayer = 3;

  TinyMLM(const Dims& dims, std::uint64_t seed);

  const Dims& dims() const { return dims_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  static int layer_index(int layer, LayerSlot slot) { return kFirstLayer + layer * kLayerSlots + slot; }
  int final_gain_index() const { return kFirstLayer + dims_.layers * kLayerSlots; }
  int final_bias_index() const { return final_gain_index() + 1; }

  /// L x V matrix of per-position output distributions.
  Matrix forward_mlm(std::span<const int> ids) const;
  /// Output distribution at one position.
  Eigen::VectorXd predict(std::span<const int> ids, int position) const;
  /// Final-layernorm hidden states, L x d.
  Matrix hidden(std::span<const int> ids) const;

 private:
  Dims dims_;
  Params params_;
};

/// One masked sequence: `ids` already carries MASK at every position listed
/// in `positions`; `targets` are the original ids there.
struct MaskedExample {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> targets;
};

/// Mean negative log-likelihood over all masked positions in the batch.
/// When `grad` is non-null it is overwritten with the gradient.
double mlm_loss_and_grad(const TinyMLM& model, std::span<const MaskedExample> batch, Params* grad);

struct ClassifierHead {
  Matrix weight;  // d x C
  Matrix bias;    // 1 x C

  ClassifierHead() = default;
  ClassifierHead(int hidden, int n_classes, std::uint64_t seed);
  int n_classes() const { return static_cast<int>(bias.cols()); }
};

struct LabeledIds {
  std::vector<int> ids;  // ids[0] must be CLS
  int label = 0;
};

/// Mean cross-entropy of the head applied to the CLS hidden state. Gradients
/// are written when the pointers are non-null.
double classify_loss_and_grad(const TinyMLM& model, const ClassifierHead& head, std::span<const LabeledIds> batch,
                              Params* model_grad, ClassifierHead* head_grad);
Eigen::VectorXd class_probs(const TinyMLM& model, const ClassifierHead& head, std::span<const int> ids);
int predict_label(const TinyMLM& model, const ClassifierHead& head, std::span<const int> ids);
double accuracy(const TinyMLM& model, const ClassifierHead& head, std::span<const LabeledIds> data);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int early_stop_patience = 3;
  /// Pretraining decays the learning rate linearly to lr * final_lr_fraction.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, int epoch, int batch)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// Adam over a fixed list of tensors.
class Adam {
 public:
  Adam(std::vector<Matrix*> tensors, const TrainConfig& cfg);
  void step(const std::vector<const Matrix*>& grads);
  long steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Matrix*> tensors_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// MLM pretraining with the given mask strategy.
TrainResult train_mlm(TinyMLM& model, const std::vector<corpus::Sentence>& corpus,
                      const masking::MaskStrategy& strategy, const TrainConfig& cfg);

struct FinetuneResult {
  ClassifierHead head;
  double dev_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<double> dev_curve;
};

/// Joint (or frozen-encoder) cross-entropy finetuning with early stopping on
/// dev accuracy. On return `model` holds the best-dev parameters.
FinetuneResult finetune(TinyMLM& model, const std::vector<LabeledIds>& train, const std::vector<LabeledIds>& dev,
                        int n_classes, const TrainConfig& cfg, bool freeze_encoder = false);

/// Binary checkpoint: magic, version, dims, vocab hash, then little-endian
/// f64 tensors in declared order, optionally followed by a classifier head.
void save_checkpoint(const std::filesystem::path& path, const TinyMLM& model, std::uint64_t vocab_hash,
                     const ClassifierHead* head = nullptr);
struct Checkpoint {
  TinyMLM model;
  std::uint64_t vocab_hash = 0;
  std::optional<ClassifierHead> head;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace depmine::mlm
