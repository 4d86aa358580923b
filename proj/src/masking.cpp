#include "depmine/masking.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace depmine::masking {

using corpus::Sentence;
using corpus::Vocab;

namespace {

// CLS and PAD carry no content to predict, so they are never mask targets.
bool maskable(int id) { return id != Vocab::kCls && id != Vocab::kPad; }

std::vector<int> maskable_positions(const Sentence& s) {
  std::vector<int> out;
  for (std::size_t k = 0; k < s.ids.size(); ++k) {
    if (maskable(s.ids[k])) out.push_back(static_cast<int>(k));
  }
  return out;
}

int pick(const std::vector<int>& positions, Rng& rng) {
  return positions[rng.below(positions.size())];
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

MaskStrategy::MaskStrategy(Kind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const Uniform& u) {
                   if (!(u.rate > 0.0 && u.rate < 1.0)) throw std::invalid_argument("uniform mask rate must lie in (0, 1)");
                 },
                 [](const Cloze& c) {
                   if (!c.lexicon || c.lexicon->words.empty()) throw std::invalid_argument("cloze masking needs a non-empty lexicon");
                 },
                 [](const NoCloze& c) {
                   if (!c.lexicon || c.lexicon->words.empty()) throw std::invalid_argument("no-cloze masking needs a non-empty lexicon");
                 },
                 [](const MixtureP& m) {
                   if (!(m.p >= 0.0 && m.p <= 100.0)) throw std::invalid_argument("mixture p must lie in [0, 100]");
                 },
             },
             kind_);
}

std::string MaskStrategy::describe() const {
  std::ostringstream out;
  std::visit(overloaded{
                 [&](const Uniform& u) { out << "uniform:" << u.rate; },
                 [&](const Cloze& c) { out << "cloze:" << c.lexicon->name; },
                 [&](const NoCloze& c) { out << "nocloze:" << c.lexicon->name; },
                 [&](const MixtureP& m) { out << "mixture:" << m.p; },
             },
             kind_);
  return out.str();
}

std::vector<int> MaskStrategy::sample(const Sentence& sentence, Rng& rng) const {
  if (sentence.ids.empty()) throw std::invalid_argument("cannot mask an empty sentence");
  std::vector<int> candidates = maskable_positions(sentence);
  if (candidates.empty()) throw std::invalid_argument("sentence has no maskable positions");

  return std::visit(
      overloaded{
          [&](const Uniform& u) {
            std::vector<int> out;
            for (int k : candidates) {
              if (rng.uniform() < u.rate) out.push_back(k);
            }
            if (out.empty()) out.push_back(pick(candidates, rng));
            return out;
          },
          [&](const Cloze& c) {
            std::vector<int> eligible;
            for (int k : candidates) {
              if (c.lexicon->contains(sentence.ids[k])) eligible.push_back(k);
            }
            if (eligible.empty()) {
              ++fallbacks_;
              return std::vector<int>{pick(candidates, rng)};
            }
            if (c.all_positions) return eligible;
            return std::vector<int>{pick(eligible, rng)};
          },
          [&](const NoCloze& c) {
            std::vector<int> eligible;
            for (int k : candidates) {
              if (!c.lexicon->contains(sentence.ids[k])) eligible.push_back(k);
            }
            if (eligible.empty()) {
              ++fallbacks_;
              return std::vector<int>{pick(candidates, rng)};
            }
            return std::vector<int>{pick(eligible, rng)};
          },
          [&](const MixtureP& m) {
            const int last = candidates.back();
            if (candidates.size() == 1 || rng.uniform() * 100.0 < m.p) return std::vector<int>{last};
            candidates.pop_back();
            return std::vector<int>{pick(candidates, rng)};
          },
      },
      kind_);
}

std::vector<int> sample_mask(const MaskStrategy& strategy, const Sentence& sentence, Rng& rng) {
  return strategy.sample(sentence, rng);
}

std::vector<int> apply_mask(const std::vector<int>& ids, const std::vector<int>& positions) {
  std::vector<int> out = ids;
  for (int k : positions) {
    if (k < 0 || static_cast<std::size_t>(k) >= ids.size()) {
      throw std::out_of_range("mask position " + std::to_string(k) + " outside sentence of length " +
                              std::to_string(ids.size()));
    }
    out[static_cast<std::size_t>(k)] = Vocab::kMask;
  }
  return out;
}

Sentence apply_mask(const Sentence& sentence, const std::vector<int>& positions) {
  Sentence out = sentence;
  out.ids = apply_mask(sentence.ids, positions);
  return out;
}

MaskStrategy parse_strategy(std::string_view spec, const Vocab& vocab) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("mask spec must look like kind:arg");
  const std::string_view kind = spec.substr(0, colon);
  const std::string arg(spec.substr(colon + 1));
  auto number = [&]() {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), v);
    if (ec != std::errc() || ptr != arg.data() + arg.size()) {
      throw std::invalid_argument("invalid number in mask spec: '" + arg + "'");
    }
    return v;
  };
  if (kind == "uniform") return MaskStrategy(Uniform{number()});
  if (kind == "mixture") return MaskStrategy(MixtureP{number()});
  if (kind == "cloze" || kind == "nocloze") {
    auto lex = std::make_shared<const corpus::Lexicon>(corpus::load_lexicon(arg, vocab).lexicon);
    if (kind == "cloze") return MaskStrategy(Cloze{lex});
    return MaskStrategy(NoCloze{lex});
  }
  throw std::invalid_argument("unknown mask kind '" + std::string(kind) + "'");
}

}  // namespace depmine::masking
