#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adgs2s/error.hpp"

namespace adgs2s::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  Tokens candidate;
  std::vector<Tokens> references;
};

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngrams(const Tokens& seq, std::size_t n) {
  NgramCounts out;
  if (n == 0 || seq.size() < n) return out;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++out[Tokens(seq.begin() + i, seq.begin() + i + n)];
  return out;
}

inline std::size_t total(const NgramCounts& c) {
  std::size_t s = 0;
  for (const auto& [g, k] : c) s += k;
  return s;
}

inline void require_corpus(std::span<const EvalPair> pairs, const char* what) {
  if (pairs.empty()) throw InvalidInput(std::string(what) + ": empty corpus");
  for (const auto& p : pairs)
    if (p.references.empty()) throw InvalidInput(std::string(what) + ": pair without a reference");
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Fraction of candidates equal to at least one of their references.
inline double acc(std::span<const EvalPair> pairs) {
  detail::require_corpus(pairs, "acc");
  std::size_t hits = 0;
  for (const auto& p : pairs)
    if (std::find(p.references.begin(), p.references.end(), p.candidate) != p.references.end()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

/// Corpus BLEU with uniform weights. Clipped n-gram matches and candidate
/// n-gram totals are summed over the corpus; the reference length per pair
/// is the one closest to the candidate (shorter on ties). A zero precision
/// for n >= 2 is smoothed to (matches + 1) / (total + 1).
inline double bleu(std::span<const EvalPair> pairs, std::size_t max_n = 4) {
  detail::require_corpus(pairs, "bleu");
  if (max_n < 1) throw InvalidInput("bleu: max_n must be >= 1");
  std::vector<double> matches(max_n + 1, 0.0), totals(max_n + 1, 0.0);
  double c = 0.0, r = 0.0;
  for (const auto& p : pairs) {
    c += static_cast<double>(p.candidate.size());
    std::size_t best = p.references.front().size();
    for (const auto& ref : p.references) {
      const auto d = [&](std::size_t len) { return len > p.candidate.size() ? len - p.candidate.size() : p.candidate.size() - len; };
      if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    r += static_cast<double>(best);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto cand = detail::ngrams(p.candidate, n);
      detail::NgramCounts ceiling;
      for (const auto& ref : p.references)
        for (const auto& [g, k] : detail::ngrams(ref, n)) ceiling[g] = std::max(ceiling[g], k);
      for (const auto& [g, k] : cand) {
        totals[n] += static_cast<double>(k);
        auto it = ceiling.find(g);
        if (it != ceiling.end()) matches[n] += static_cast<double>(std::min(k, it->second));
      }
    }
  }
  if (c == 0.0 || matches[1] == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double precision = totals[n] > 0.0 ? matches[n] / totals[n] : 0.0;
    if (precision == 0.0) precision = (matches[n] + 1.0) / (totals[n] + 1.0);
    log_sum += std::log(precision) / static_cast<double>(max_n);
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

/// ROUGE-N recall per pair (reference n-grams clipped-matched in the
/// candidate, summed over references), averaged over pairs. Pairs whose
/// references hold no n-grams are skipped.
inline double rouge_n(std::span<const EvalPair> pairs, std::size_t n) {
  detail::require_corpus(pairs, "rouge_n");
  if (n < 1) throw InvalidInput("rouge_n: n must be >= 1");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& p : pairs) {
    const auto cand = detail::ngrams(p.candidate, n);
    std::size_t hit = 0, all = 0;
    for (const auto& ref : p.references) {
      for (const auto& [g, k] : detail::ngrams(ref, n)) {
        all += k;
        auto it = cand.find(g);
        if (it != cand.end()) hit += std::min(k, it->second);
      }
    }
    if (all == 0) continue;
    sum += static_cast<double>(hit) / static_cast<double>(all);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

/// LCS F-measure with P = LCS / reference length and R = LCS / candidate
/// length; best reference per pair, averaged over pairs.
inline double rouge_l(std::span<const EvalPair> pairs, double beta = 1.0) {
  detail::require_corpus(pairs, "rouge_l");
  double sum = 0.0;
  for (const auto& p : pairs) {
    double best = 0.0;
    if (!p.candidate.empty()) {
      for (const auto& ref : p.references) {
        if (ref.empty()) continue;
        const double lcs = static_cast<double>(detail::lcs_length(ref, p.candidate));
        const double prec = lcs / static_cast<double>(ref.size());
        const double rec = lcs / static_cast<double>(p.candidate.size());
        const double b2 = beta * beta;
        if (rec + b2 * prec > 0.0) best = std::max(best, (1.0 + b2) * rec * prec / (rec + b2 * prec));
      }
    }
    sum += best;
  }
  return sum / static_cast<double>(pairs.size());
}

/// TF-IDF cosine per n-gram order, IDF = log(N / max(1, df)) with df the
/// number of pairs whose references contain the n-gram. Per pair: mean over
/// references of the mean over orders where either side has n-grams; pairs
/// are averaged. When a weight vector has zero norm the cosine is 1 if the
/// raw n-gram counts are identical and 0 otherwise.
inline double cider(std::span<const EvalPair> pairs, std::size_t max_n = 4) {
  detail::require_corpus(pairs, "cider");
  if (max_n < 1) throw InvalidInput("cider: max_n must be >= 1");
  const double N = static_cast<double>(pairs.size());
  std::vector<std::map<Tokens, std::size_t>> df(max_n + 1);
  for (const auto& p : pairs)
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::map<Tokens, bool> seen;
      for (const auto& ref : p.references)
        for (const auto& [g, k] : detail::ngrams(ref, n)) seen[g] = true;
      for (const auto& [g, b] : seen) ++df[n][g];
    }
  auto weights = [&](const detail::NgramCounts& counts, std::size_t n) {
    std::map<Tokens, double> w;
    const double tot = static_cast<double>(detail::total(counts));
    for (const auto& [g, k] : counts) {
      auto it = df[n].find(g);
      const double d = it == df[n].end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
      w[g] = static_cast<double>(k) / tot * std::log(N / d);
    }
    return w;
  };
  auto norm = [](const std::map<Tokens, double>& w) {
    double s = 0.0;
    for (const auto& [g, v] : w) s += v * v;
    return std::sqrt(s);
  };

  double sum = 0.0;
  for (const auto& p : pairs) {
    double pair_score = 0.0;
    for (const auto& ref : p.references) {
      double ref_score = 0.0;
      std::size_t orders = 0;
      for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cc = detail::ngrams(p.candidate, n);
        const auto rc = detail::ngrams(ref, n);
        if (cc.empty() && rc.empty()) continue;
        ++orders;
        const auto wc = weights(cc, n);
        const auto wr = weights(rc, n);
        const double nc = norm(wc), nr = norm(wr);
        if (nc == 0.0 || nr == 0.0) {
          ref_score += cc == rc ? 1.0 : 0.0;
          continue;
        }
        double dot = 0.0;
        for (const auto& [g, v] : wc)
          if (auto it = wr.find(g); it != wr.end()) dot += v * it->second;
        ref_score += dot / (nc * nr);
      }
      if (orders > 0) pair_score += ref_score / static_cast<double>(orders);
    }
    sum += pair_score / static_cast<double>(p.references.size());
  }
  return sum / N;
}

/// Normalised Spearman correlation between candidate order and reference
/// order of aligned tokens. Each candidate token aligns to the first unused
/// occurrence of the same token in the reference. An exact match scores 1;
/// otherwise fewer than two aligned tokens scores 0.5. Best reference per
/// pair, averaged over pairs.
inline double ribes_pair(const Tokens& candidate, const Tokens& reference) {
  if (candidate == reference) return 1.0;
  std::vector<char> used(reference.size(), 0);
  std::vector<std::size_t> ref_pos;
  for (const auto& tok : candidate) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == tok) {
        used[j] = 1;
        ref_pos.push_back(j);
        break;
      }
    }
  }
  const std::size_t n = ref_pos.size();
  if (n < 2) return 0.5;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ref_pos[a] < ref_pos[b]; });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(rank[i]);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  const double choose = (nn + 1.0) * nn * (nn - 1.0) / 6.0;
  const double rho = 1.0 - d2 / choose;
  return (rho + 1.0) / 2.0;
}

inline double ribes(std::span<const EvalPair> pairs) {
  detail::require_corpus(pairs, "ribes");
  double sum = 0.0;
  for (const auto& p : pairs) {
    double best = 0.0;
    for (const auto& ref : p.references) best = std::max(best, ribes_pair(p.candidate, ref));
    sum += best;
  }
  return sum / static_cast<double>(pairs.size());
}

inline double harmonic_mean(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Harmonic mean of BLEU (precision) and ROUGE-1 (recall).
inline double f1(std::span<const EvalPair> pairs) { return harmonic_mean(bleu(pairs), rouge_n(pairs, 1)); }

// ---------------------------------------------------------------------------
// Toy call-chain grammar
//
//   program := stmt+
//   stmt    := var '=' name '(' [var {',' var}] ')' ';'
//   var     := 'v' digit+
//   name    := identifier, dots allowed inside
// ---------------------------------------------------------------------------

inline bool is_variable(const std::string& tok) {
  return tok.size() >= 2 && tok[0] == 'v' &&
         std::all_of(tok.begin() + 1, tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline bool is_callee(const std::string& tok) {
  if (tok.empty() || tok.front() == '.' || tok.back() == '.') return false;
  if (!(std::isalpha(static_cast<unsigned char>(tok[0])) || tok[0] == '_')) return false;
  return std::all_of(tok.begin(), tok.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; });
}

class ToyParser {
 public:
  explicit ToyParser(const Tokens& tokens) : toks_(tokens) {}

  bool program() {
    if (toks_.empty()) return false;
    while (pos_ < toks_.size())
      if (!statement()) return false;
    return true;
  }

 private:
  bool statement() {
    if (!take_if(is_variable) || !take("=") || !take_if(is_callee) || !take("(")) return false;
    if (take(")")) return take(";");
    do {
      if (!take_if(is_variable)) return false;
    } while (take(","));
    return take(")") && take(";");
  }

  bool take(const char* lit) {
    if (pos_ < toks_.size() && toks_[pos_] == lit) {
      ++pos_;
      return true;
    }
    return false;
  }

  template <class Pred>
  bool take_if(Pred pred) {
    if (pos_ < toks_.size() && pred(toks_[pos_])) {
      ++pos_;
      return true;
    }
    return false;
  }

  const Tokens& toks_;
  std::size_t pos_ = 0;
};

inline bool parses_as_program(const Tokens& tokens) { return ToyParser(tokens).program(); }

/// Fraction of candidates accepted by the toy grammar; 0 for no candidates.
inline double pov_toy(std::span<const Tokens> candidates) {
  if (candidates.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& c : candidates)
    if (parses_as_program(c)) ++ok;
  return static_cast<double>(ok) / static_cast<double>(candidates.size());
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricReport {
  double acc = 0.0;
  double bleu = 0.0;
  double f1 = 0.0;
  double cider = 0.0;
  double rouge_l = 0.0;
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  double ribes = 0.0;
  double pov = 0.0;
  std::size_t size = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport evaluate(std::span<const EvalPair> pairs) {
  detail::require_corpus(pairs, "evaluate");
  MetricReport r;
  r.acc = acc(pairs);
  r.bleu = bleu(pairs);
  r.rouge_1 = rouge_n(pairs, 1);
  r.rouge_2 = rouge_n(pairs, 2);
  r.f1 = harmonic_mean(r.bleu, r.rouge_1);
  r.cider = cider(pairs);
  r.rouge_l = rouge_l(pairs);
  r.ribes = ribes(pairs);
  std::vector<Tokens> cands;
  for (const auto& p : pairs) cands.push_back(p.candidate);
  r.pov = pov_toy(cands);
  r.size = pairs.size();
  return r;
}

/// One JSON object, keys in table order: Acc, Bleu, F1, CIDEr, RougeL,
/// Rouge1, Rouge2, RIBES, PoV, then the corpus size. Values are the raw
/// [0, 1] scores at full precision.
inline std::string format_report(const MetricReport& r) {
  const std::pair<const char*, double> cols[] = {{"Acc", r.acc},        {"Bleu", r.bleu},     {"F1", r.f1},
                                                 {"CIDEr", r.cider},    {"RougeL", r.rouge_l}, {"Rouge1", r.rouge_1},
                                                 {"Rouge2", r.rouge_2}, {"RIBES", r.ribes},   {"PoV", r.pov}};
  std::string out = "{";
  char buf[64];
  for (const auto& [key, value] : cols) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out += "\"" + std::string(key) + "\": " + buf + ", ";
  }
  out += "\"size\": " + std::to_string(r.size) + "}";
  return out;
}

/// Fixed-width table row with scores scaled to percentages (CIDEr as is).
inline std::string format_row(const std::string& label, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %6.1f %6.1f %6.1f %6.2f %6.1f %6.1f %6.1f %6.1f %6.1f", label.c_str(),
                100 * r.acc, 100 * r.bleu, 100 * r.f1, r.cider, 100 * r.rouge_l, 100 * r.rouge_1, 100 * r.rouge_2,
                100 * r.ribes, 100 * r.pov);
  return buf;
}

inline std::string table_header() {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %6s %6s %6s %6s %6s %6s %6s %6s %6s", "", "Acc", "Bleu", "F1", "CIDEr",
                "RougeL", "Rouge1", "Rouge2", "RIBES", "PoV");
  return buf;
}

}  // namespace adgs2s::metrics
