#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "depmine/corpus.hpp"
#include "depmine/rng.hpp"

namespace depmine::masking {

struct Uniform {
  double rate = 0.15;
};
struct Cloze {
  std::shared_ptr<const corpus::Lexicon> lexicon;
  /// Mask every lexicon token instead of a single one.
  bool all_positions = false;
};
struct NoCloze {
  std::shared_ptr<const corpus::Lexicon> lexicon;
};
struct MixtureP {
  double p = 100.0;
};

class MaskStrategy {
 public:
  using Kind = std::variant<Uniform, Cloze, NoCloze, MixtureP>;

  explicit MaskStrategy(Kind kind);

  const Kind& kind() const { return kind_; }
  std::string describe() const;

  /// Number of draws where the eligible set was empty and a uniform
  /// position was used instead. Not thread-safe; one strategy per worker.
  std::size_t fallback_count() const { return fallbacks_; }
  void reset_fallback_count() { fallbacks_ = 0; }

  /// Sorted positions to mask; never empty.
  std::vector<int> sample(const corpus::Sentence& sentence, Rng& rng) const;

 private:
  Kind kind_;
  mutable std::size_t fallbacks_ = 0;
};

/// Parses "uniform:0.15", "cloze:<lexfile>", "nocloze:<lexfile>" or "mixture:<p>".
MaskStrategy parse_strategy(std::string_view spec, const corpus::Vocab& vocab);

/// Free-function form of MaskStrategy::sample.
std::vector<int> sample_mask(const MaskStrategy& strategy, const corpus::Sentence& sentence, Rng& rng);

/// Copy of `sentence` with the listed positions replaced by the MASK id.
corpus::Sentence apply_mask(const corpus::Sentence& sentence, const std::vector<int>& positions);
std::vector<int> apply_mask(const std::vector<int>& ids, const std::vector<int>& positions);

}  // namespace depmine::masking
