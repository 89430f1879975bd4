#include "mars/batch_model.hpp"

#include "mars/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mars {

namespace {

constexpr std::array<char, 8> kMagic{'M', 'A', 'R', 'S', 'B', 'M', '1', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("batch model: truncated file");
  return v;
}

} // namespace

BatchKey summarize_minute(const OrderImage& img, double minute_return) noexcept {
  const auto stats = implied_stats(img);
  std::int64_t cancels = 0;
  for (int h = 0; h < kImageHeight; ++h)
    for (int w = 0; w < kImageWidth; ++w) cancels += img.at(2, h, w);
  const double count = static_cast<double>(stats.order_count);
  return BatchKey{std::log1p(count), stats.buy_ratio.value_or(0.5), stats.net_pressure / std::max(1.0, count),
                  count > 0 ? static_cast<double>(cancels) / count : 0.0, 1e4 * minute_return};
}

BatchModel::BatchModel(std::vector<Entry> entries, double perturbation)
    : entries_(std::move(entries)), perturbation_(perturbation) {
  calibrate();
}

BatchModel BatchModel::build(std::span<const MinuteBatch> minutes, const CodecConfig& cfg, double perturbation) {
  std::vector<Entry> entries;
  for (std::size_t i = 0; i + 1 < minutes.size(); ++i) {
    const auto& cur = minutes[i];
    const auto& next = minutes[i + 1];
    Entry e;
    e.key = summarize_minute(batch_to_image(cur.orders, cur.open_mid, cfg, cur.minute),
                             minute_return(cur.open_mid, cur.close_mid));
    e.successor = batch_to_image(next.orders, next.open_mid, cfg, next.minute);
    e.successor_return = minute_return(next.open_mid, next.close_mid);
    entries.push_back(std::move(e));
  }
  return BatchModel(std::move(entries), perturbation);
}

void BatchModel::calibrate() {
  const auto n = static_cast<double>(entries_.size());
  scale_.fill(1.0);
  intercept_ = 0.0;
  slope_ = 0.0;
  if (entries_.empty()) return;
  for (std::size_t d = 0; d < kBatchKeyDims; ++d) {
    double mean = 0.0;
    for (const auto& e : entries_) mean += e.key[d];
    mean /= n;
    double var = 0.0;
    for (const auto& e : entries_) var += (e.key[d] - mean) * (e.key[d] - mean);
    const double sd = std::sqrt(var / n);
    scale_[d] = sd > 1e-12 ? sd : 1.0;
  }
  double mx = 0.0;
  double my = 0.0;
  for (const auto& e : entries_) {
    mx += implied_stats(e.successor).net_pressure;
    my += e.successor_return;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& e : entries_) {
    const double dx = implied_stats(e.successor).net_pressure - mx;
    sxx += dx * dx;
    sxy += dx * (e.successor_return - my);
  }
  slope_ = sxx > 0.0 ? sxy / sxx : 0.0;
  intercept_ = my - slope_ * mx;
}

std::vector<std::size_t> BatchModel::rank(const BatchKey& query) const {
  std::vector<double> dist(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < kBatchKeyDims; ++d) {
      const double z = (query[d] - entries_[i].key[d]) / scale_[d];
      s += z * z;
    }
    dist[i] = s;
  }
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

std::vector<OrderImage> BatchModel::generate_candidates(const BatchKey& query, int n, std::uint64_t seed) const {
  if (entries_.empty()) throw Error("batch model: empty library");
  if (n < 1) throw Error("batch model: need at least one candidate");
  const auto order = rank(query);
  const auto pool = std::min<std::size_t>(static_cast<std::size_t>(n), order.size());
  std::vector<OrderImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    OrderImage img = entries_[order[static_cast<std::size_t>(i) % pool]].successor;
    if (perturbation_ > 0.0) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
      for (auto& c : img.cells) {
        if (c == 0) continue;
        const double v = static_cast<double>(c) * std::exp(perturbation_ * standard_normal(rng));
        c = static_cast<std::uint8_t>(std::clamp<long long>(std::llround(v), 0, kMaxCellCount));
      }
    }
    out.push_back(img);
  }
  return out;
}

double BatchModel::implied_return(const OrderImage& img) const noexcept {
  return intercept_ + slope_ * implied_stats(img).net_pressure;
}

void BatchModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write batch model " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kFormatVersion);
  put<double>(out, perturbation_);
  put<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    for (double k : e.key) put<double>(out, k);
    put<std::int64_t>(out, e.successor.ref_mid);
    put<std::int64_t>(out, e.successor.minute);
    put<double>(out, e.successor_return);
    out.write(reinterpret_cast<const char*>(e.successor.cells.data()),
              static_cast<std::streamsize>(e.successor.cells.size()));
  }
  std::ofstream manifest(path.string() + ".json");
  manifest << nlohmann::json{{"format", "MARSBM1"},
                             {"version", kFormatVersion},
                             {"entries", entries_.size()},
                             {"perturbation", perturbation_},
                             {"calibration", {{"intercept", intercept_}, {"slope", slope_}}}}
                  .dump(2)
           << '\n';
}

BatchModel BatchModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open batch model " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("batch model: bad magic in " + path.string());
  if (get<std::uint32_t>(in) != kFormatVersion) throw Error("batch model: unsupported version");
  const double perturbation = get<double>(in);
  const auto n = get<std::uint64_t>(in);
  std::vector<Entry> entries(n);
  for (auto& e : entries) {
    for (double& k : e.key) k = get<double>(in);
    e.successor.ref_mid = get<std::int64_t>(in);
    e.successor.minute = get<std::int64_t>(in);
    e.successor_return = get<double>(in);
    in.read(reinterpret_cast<char*>(e.successor.cells.data()), static_cast<std::streamsize>(e.successor.cells.size()));
    if (!in) throw Error("batch model: truncated file");
  }
  return BatchModel(std::move(entries), perturbation);
}

} // namespace mars
