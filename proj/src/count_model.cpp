#include "mars/count_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>
#include <unordered_map>

namespace mars {

namespace {

constexpr std::array<char, 8> kMagic{'M', 'A', 'R', 'S', 'C', 'M', '1', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kUnigramKey = 0;
// per-level discounts are clamped so every level keeps some backoff mass
constexpr double kMinDiscount = 0.05;
constexpr double kMaxDiscount = 0.95;

// Ney's estimate from count-of-counts: n1 / (n1 + 2 n2).
double estimate_discount(std::uint64_t n1, std::uint64_t n2) {
  if (n1 == 0) return kMinDiscount;
  const double d = static_cast<double>(n1) / (static_cast<double>(n1) + 2.0 * static_cast<double>(n2));
  return std::clamp(d, kMinDiscount, kMaxDiscount);
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("count model: truncated file");
  return v;
}

} // namespace

LobState LobState::from(const LobSnapshot& snapshot, int trend_sign) noexcept {
  LobState s;
  if (auto sp = snapshot.spread()) {
    const auto v = *sp;
    s.spread_bucket = v <= 1 ? 1 : v == 2 ? 2 : v <= 4 ? 3 : 4;
  }
  const double imb = snapshot.imbalance();
  s.imbalance_bucket = imb < -0.6 ? 0 : imb < -0.2 ? 1 : imb <= 0.2 ? 2 : imb <= 0.6 ? 3 : 4;
  s.trend = trend_sign < 0 ? 0 : trend_sign == 0 ? 1 : 2;
  return s;
}

Ticks LobStateTracker::mid(const LimitOrderBook& book) const {
  return mid_ticks(twice_mid(book.snapshot(), book.last_trade_price(), reference_));
}

LobState LobStateTracker::observe(TimeMs clock, const LimitOrderBook& book) {
  const auto snap = book.snapshot();
  const Ticks m2 = twice_mid(snap, book.last_trade_price(), reference_);
  const auto minute = clock >= 0 ? clock / kMillisPerMinute : -1;
  if (minute != minute_) {
    minute_ = minute;
    minute_open_twice_mid_ = m2;
  }
  const int sign = (m2 > minute_open_twice_mid_) - (m2 < minute_open_twice_mid_);
  return LobState::from(snap, sign);
}

std::vector<ContextualToken> tokenize(std::span<const Order> orders, const CodecConfig& cfg, Ticks reference) {
  LimitOrderBook book;
  LobStateTracker tracker(reference);
  std::vector<ContextualToken> out;
  out.reserve(orders.size());
  TimeMs clock = 0;
  for (const auto& o : orders) {
    clock += o.interval;
    const auto state = tracker.observe(clock, book);
    const auto mid = tracker.mid(book);
    out.push_back(ContextualToken{encode_order(o, mid, cfg), state});
    book.submit(o);
  }
  return out;
}

std::uint64_t CountModel::Entry::count(std::uint32_t token) const noexcept {
  auto it = std::lower_bound(tokens.begin(), tokens.end(), token);
  if (it == tokens.end() || *it != token) return 0;
  const auto i = static_cast<std::size_t>(it - tokens.begin());
  return cumulative[i] - (i == 0 ? 0 : cumulative[i - 1]);
}

std::uint32_t CountModel::Entry::draw(Rng& rng) const noexcept {
  const auto r = static_cast<std::uint64_t>(uniform_int(rng, 0, static_cast<std::int64_t>(total) - 1));
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  return tokens[static_cast<std::size_t>(it - cumulative.begin())];
}

void CountModel::Entry::add(std::uint32_t token, std::uint64_t n) {
  // appended in sorted order by the builders
  tokens.push_back(token);
  total += n;
  cumulative.push_back(total);
}

std::uint64_t CountModel::context_key(int level, int state, std::span<const OrderToken> tokens) noexcept {
  // the book state is its own level; token contexts above it pool across states
  const auto s = level == 0 ? static_cast<std::uint64_t>(state) : 0;
  std::uint64_t h = mix_seed(static_cast<std::uint64_t>(level) + 1, s);
  for (auto t : tokens) h = mix_seed(h, t.index());
  return h | 1U;
}

CountModel CountModel::fit(std::span<const std::vector<ContextualToken>> corpus, int depth, double alpha) {
  if (depth < 1) throw Error("count model: depth must be >= 1");
  if (!(alpha > 0.0)) throw Error("count model: alpha must be positive");
  std::unordered_map<std::uint64_t, std::map<std::uint32_t, std::uint64_t>> counts;
  std::unordered_map<std::uint64_t, int> level_of;
  std::map<std::uint32_t, std::uint64_t> uni;
  std::uint64_t n = 0;
  std::vector<OrderToken> window;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto tok = seq[i].token.index();
      const int state = seq[i].state.code();
      ++uni[tok];
      ++n;
      const auto k0 = context_key(0, state, {});
      ++counts[k0][tok];
      level_of[k0] = 0;
      const auto avail = std::min<std::size_t>(static_cast<std::size_t>(depth), i);
      for (std::size_t d = 1; d <= avail; ++d) {
        window.clear();
        for (std::size_t j = i - d; j < i; ++j) window.push_back(seq[j].token);
        const auto kd = context_key(static_cast<int>(d), state, window);
        ++counts[kd][tok];
        level_of[kd] = static_cast<int>(d);
      }
    }
  }
  if (n == 0) throw Error("count model: empty corpus");

  CountModel m;
  m.depth_ = depth;
  m.alpha_ = alpha;
  for (const auto& [tok, c] : uni) m.unigram_.add(tok, c);
  m.unigram_total_ = n;
  std::vector<std::uint64_t> n1(static_cast<std::size_t>(depth) + 1), n2(n1.size());
  for (const auto& [key, row] : counts) {
    auto& e = m.contexts_[key];
    const auto lvl = static_cast<std::size_t>(level_of[key]);
    for (const auto& [tok, c] : row) {
      e.add(tok, c);
      if (c == 1) ++n1[lvl];
      if (c == 2) ++n2[lvl];
    }
  }
  for (std::size_t l = 0; l < n1.size(); ++l) m.discounts_.push_back(estimate_discount(n1[l], n2[l]));
  m.tune_weights(corpus);
  return m;
}

double CountModel::unigram_probability(std::uint32_t t) const noexcept {
  return (static_cast<double>(unigram_.count(t)) + alpha_) /
         (static_cast<double>(unigram_total_) + alpha_ * static_cast<double>(kVocabularySize));
}

double CountModel::interpolate(const Entry& e, std::size_t level, std::uint32_t t, double lower) const noexcept {
  const double c = static_cast<double>(e.count(t));
  const double n = static_cast<double>(e.total);
  const double u = static_cast<double>(e.tokens.size());
  const double d = discounts_[level];
  const double w = weights_[level];
  return w * ((c > 0.0 ? c - d : 0.0) / n + d * u / n * lower) + (1.0 - w) * lower;
}

void CountModel::tune_weights(std::span<const std::vector<ContextualToken>> corpus) {
  // Deleted interpolation: each sequence is cut into contiguous blocks and
  // every position is scored with the counts of the other blocks only. Whole
  // blocks are held out because nearby orders repeat each other, which makes
  // leave-one-out far too kind to the sparse levels. A level that only splits
  // the data ends up with a weight near zero and defers to the level below.
  constexpr std::size_t kBlocks = 5;
  weights_.assign(discounts_.size(), 1.0);
  const double v = static_cast<double>(kVocabularySize);

  struct BlockRow {
    std::map<std::uint32_t, std::uint64_t> counts;
    std::uint64_t total{0};
    std::uint64_t gone{0}; // continuations seen only inside the block
    bool counted{false};
  };
  std::unordered_map<std::uint64_t, BlockRow> held;
  std::vector<std::map<std::uint32_t, std::uint64_t>> uni_held(kBlocks);
  std::vector<std::uint64_t> uni_held_total(kBlocks, 0);

  struct Pos {
    std::uint32_t t;
    std::size_t block;
    std::vector<std::uint64_t> keys;
    std::vector<const Entry*> chain;
  };
  std::vector<Pos> pos;
  for (const auto& seq : corpus) {
    TokenContext ctx;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto& ct = seq[i];
      ctx.state = ct.state;
      Pos p;
      p.t = static_cast<std::uint32_t>(ct.token.index());
      p.block = i * kBlocks / seq.size();
      p.chain = chain(ctx);
      const int state = ctx.state.code();
      for (std::size_t level = 0; level < p.chain.size(); ++level) {
        std::span<const OrderToken> tail(ctx.recent.data() + ctx.recent.size() - level, level);
        const auto key = mix_seed(context_key(static_cast<int>(level), state, tail), p.block);
        p.keys.push_back(key);
        auto& row = held[key];
        ++row.counts[p.t];
        ++row.total;
      }
      ++uni_held[p.block][p.t];
      ++uni_held_total[p.block];
      pos.push_back(std::move(p));
      ctx.recent.push_back(ct.token);
      if (ctx.recent.size() > static_cast<std::size_t>(depth_)) ctx.recent.erase(ctx.recent.begin());
    }
  }
  for (const auto& p : pos)
    for (std::size_t level = 0; level < p.chain.size(); ++level) {
      auto& row = held[p.keys[level]];
      if (row.counted) continue;
      row.counted = true;
      for (const auto& [tok, c] : row.counts)
        if (p.chain[level]->count(tok) == c) ++row.gone;
    }

  std::vector<double> lower(pos.size());
  std::vector<bool> cut(pos.size(), false); // context unseen outside the block
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const auto& p = pos[i];
    const double c = static_cast<double>(unigram_.count(p.t) - uni_held[p.block][p.t]);
    const double n = static_cast<double>(unigram_total_ - uni_held_total[p.block]);
    lower[i] = (c + alpha_) / (n + alpha_ * v);
  }
  struct Row {
    double c, n, u, lower;
    std::size_t i;
  };
  std::vector<Row> rows;
  for (std::size_t level = 0; level < weights_.size(); ++level) {
    rows.clear();
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const auto& p = pos[i];
      if (cut[i] || p.chain.size() <= level) continue;
      const Entry& e = *p.chain[level];
      const auto& row = held[p.keys[level]];
      const double n = static_cast<double>(e.total - row.total);
      if (n <= 0.0) {
        cut[i] = true;
        continue;
      }
      rows.push_back({static_cast<double>(e.count(p.t) - row.counts.at(p.t)), n,
                      static_cast<double>(e.tokens.size() - row.gone), lower[i], i});
    }
    const double d = discounts_[level];
    auto estimate = [d](const Row& r, double w) {
      return w * ((r.c > 0.0 ? r.c - d : 0.0) / r.n + d * r.u / r.n * r.lower) + (1.0 - w) * r.lower;
    };
    auto score = [&](double w) {
      double ll = 0.0;
      for (const auto& r : rows) ll += std::log(estimate(r, w));
      return ll;
    };
    // the objective is concave in w
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 40 && !rows.empty(); ++it) {
      const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
      if (score(m1) < score(m2))
        a = m1;
      else
        b = m2;
    }
    // no evidence at this level: inherit the weight below
    weights_[level] = !rows.empty() ? 0.5 * (a + b) : level > 0 ? weights_[level - 1] : 1.0;
    for (const auto& r : rows) lower[r.i] = estimate(r, weights_[level]);
  }
}

std::vector<const CountModel::Entry*> CountModel::chain(const TokenContext& ctx) const {
  std::vector<const Entry*> out;
  const int state = ctx.state.code();
  const auto& recent = ctx.recent;
  for (int level = 0; level <= depth_; ++level) {
    if (static_cast<std::size_t>(level) > recent.size()) break;
    std::span<const OrderToken> tail(recent.data() + recent.size() - static_cast<std::size_t>(level),
                                     static_cast<std::size_t>(level));
    auto it = contexts_.find(context_key(level, state, tail));
    if (it == contexts_.end()) break;
    out.push_back(&it->second);
  }
  return out;
}

double CountModel::probability(const TokenContext& ctx, OrderToken token) const {
  const auto t = static_cast<std::uint32_t>(token.index());
  double p = unigram_probability(t);
  const auto levels = chain(ctx);
  for (std::size_t l = 0; l < levels.size(); ++l) p = interpolate(*levels[l], l, t, p);
  return p;
}

std::vector<double> CountModel::distribution(const TokenContext& ctx) const {
  const double v = static_cast<double>(kVocabularySize);
  const double denom = static_cast<double>(unigram_total_) + alpha_ * v;
  std::vector<double> p(kVocabularySize, alpha_ / denom);
  for (std::size_t i = 0; i < unigram_.tokens.size(); ++i) {
    const auto c = unigram_.cumulative[i] - (i == 0 ? 0 : unigram_.cumulative[i - 1]);
    p[unigram_.tokens[i]] += static_cast<double>(c) / denom;
  }
  const auto levels = chain(ctx);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const Entry* e = levels[l];
    const double d = discounts_[l];
    const double w = weights_[l];
    const double u = static_cast<double>(e->tokens.size());
    const double n = static_cast<double>(e->total);
    const double keep = w * d * u / n + (1.0 - w);
    for (auto& x : p) x *= keep;
    for (std::size_t i = 0; i < e->tokens.size(); ++i) {
      const auto c = e->cumulative[i] - (i == 0 ? 0 : e->cumulative[i - 1]);
      p[e->tokens[i]] += w * (static_cast<double>(c) - d) / n;
    }
  }
  return p;
}

OrderToken CountModel::sample(const TokenContext& ctx, Rng& rng) const {
  const auto levels = chain(ctx);
  for (std::size_t l = levels.size(); l-- > 0;) {
    // with probability w draw by count and keep with probability (c - D) / c;
    // everything else falls through to the level below
    if (uniform01(rng) >= weights_[l]) continue;
    const Entry* e = levels[l];
    const auto t = e->draw(rng);
    const double c = static_cast<double>(e->count(t));
    if (uniform01(rng) * c < c - discounts_[l]) return OrderToken::from_index(t);
  }
  const double n = static_cast<double>(unigram_total_);
  if (uniform01(rng) * (n + alpha_ * kVocabularySize) < n) return OrderToken::from_index(unigram_.draw(rng));
  return OrderToken::from_index(uniform_int(rng, 0, kVocabularySize - 1));
}

double CountModel::mean_log_likelihood(std::span<const ContextualToken> sequence) const {
  if (sequence.empty()) return 0.0;
  double ll = 0.0;
  TokenContext ctx;
  for (const auto& ct : sequence) {
    ctx.state = ct.state;
    ll += std::log(probability(ctx, ct.token));
    ctx.recent.push_back(ct.token);
    if (ctx.recent.size() > static_cast<std::size_t>(depth_)) ctx.recent.erase(ctx.recent.begin());
  }
  return ll / static_cast<double>(sequence.size());
}

void CountModel::save(const std::filesystem::path& path) const {
  std::vector<std::tuple<std::uint64_t, std::uint32_t, std::uint64_t>> triples;
  auto emit = [&triples](std::uint64_t key, const Entry& e) {
    for (std::size_t i = 0; i < e.tokens.size(); ++i)
      triples.emplace_back(key, e.tokens[i], e.cumulative[i] - (i == 0 ? 0 : e.cumulative[i - 1]));
  };
  emit(kUnigramKey, unigram_);
  for (const auto& [key, e] : contexts_) emit(key, e);
  std::sort(triples.begin(), triples.end());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write count model " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(depth_));
  put<double>(out, alpha_);
  for (double d : discounts_) put<double>(out, d);
  for (double w : weights_) put<double>(out, w);
  put<std::uint64_t>(out, triples.size());
  for (const auto& [key, tok, c] : triples) {
    put<std::uint64_t>(out, key);
    put<std::uint32_t>(out, tok);
    put<std::uint64_t>(out, c);
  }
  std::ofstream manifest(path.string() + ".json");
  manifest << nlohmann::json{{"format", "MARSCM1"},
                             {"version", kFormatVersion},
                             {"k", depth_},
                             {"alpha", alpha_},
                             {"discounts", discounts_},
                             {"weights", weights_},
                             {"vocabulary_size", kVocabularySize},
                             {"triples", triples.size()}}
                  .dump(2)
           << '\n';
}

CountModel CountModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open count model " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("count model: bad magic in " + path.string());
  if (get<std::uint32_t>(in) != kFormatVersion) throw Error("count model: unsupported version");
  CountModel m;
  m.depth_ = static_cast<int>(get<std::uint32_t>(in));
  m.alpha_ = get<double>(in);
  if (m.depth_ < 1 || m.depth_ > 64) throw Error("count model: bad depth in " + path.string());
  for (int l = 0; l <= m.depth_; ++l) m.discounts_.push_back(get<double>(in));
  for (int l = 0; l <= m.depth_; ++l) m.weights_.push_back(get<double>(in));
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto key = get<std::uint64_t>(in);
    const auto tok = get<std::uint32_t>(in);
    const auto c = get<std::uint64_t>(in);
    if (tok >= static_cast<std::uint32_t>(kVocabularySize)) throw Error("count model: token out of range");
    if (key == kUnigramKey) {
      m.unigram_.add(tok, c);
    } else {
      m.contexts_[key].add(tok, c);
    }
  }
  m.unigram_total_ = m.unigram_.total;
  if (m.unigram_total_ == 0) throw Error("count model: no unigram counts in " + path.string());
  return m;
}

bool operator==(const CountModel& a, const CountModel& b) {
  auto same = [](const CountModel::Entry& x, const CountModel::Entry& y) {
    return x.total == y.total && x.tokens == y.tokens && x.cumulative == y.cumulative;
  };
  if (a.depth_ != b.depth_ || a.alpha_ != b.alpha_ || a.discounts_ != b.discounts_ || a.weights_ != b.weights_ ||
      a.unigram_total_ != b.unigram_total_)
    return false;
  if (!same(a.unigram_, b.unigram_) || a.contexts_.size() != b.contexts_.size()) return false;
  for (const auto& [key, e] : a.contexts_) {
    auto it = b.contexts_.find(key);
    if (it == b.contexts_.end() || !same(e, it->second)) return false;
  }
  return true;
}

} // namespace mars
