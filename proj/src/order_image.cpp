#include "mars/order_image.hpp"

#include "mars/random.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

namespace mars {

int image_channel(OrderKind kind) noexcept {
  switch (kind) {
    case OrderKind::Bid: return 0;
    case OrderKind::Ask: return 1;
    case OrderKind::Cancel: return 2;
  }
  return 2;
}

OrderKind channel_kind(int channel) noexcept {
  switch (channel) {
    case 0: return OrderKind::Bid;
    case 1: return OrderKind::Ask;
    default: return OrderKind::Cancel;
  }
}

std::int64_t OrderImage::total() const noexcept {
  std::int64_t s = 0;
  for (auto c : cells) s += c;
  return s;
}

OrderImage batch_to_image(std::span<const Order> orders, Ticks ref_mid, const CodecConfig& cfg,
                          std::int64_t minute) {
  std::array<std::int32_t, kImageCells> counts{};
  for (const auto& o : orders) {
    const auto idx = OrderImage::offset(image_channel(o.kind), cfg.volume_bucket(o.volume),
                                        cfg.price_bucket(o.price, ref_mid));
    ++counts[idx];
  }
  OrderImage img;
  img.ref_mid = ref_mid;
  img.minute = minute;
  for (std::size_t i = 0; i < counts.size(); ++i)
    img.cells[i] = static_cast<std::uint8_t>(std::min<std::int32_t>(counts[i], kMaxCellCount));
  return img;
}

std::vector<Order> image_to_batch(const OrderImage& img, std::uint64_t seed, const CodecConfig& cfg) {
  Rng rng(seed);
  std::vector<Order> out;
  out.reserve(static_cast<std::size_t>(img.total()));
  for (int c = 0; c < kImageChannels; ++c) {
    for (int h = 0; h < kImageHeight; ++h) {
      for (int w = 0; w < kImageWidth; ++w) {
        const auto n = img.at(c, h, w);
        if (n == 0) continue;
        const auto [plo, phi] = cfg.price_range(w, img.ref_mid);
        const auto [vlo, vhi] = cfg.volume_range(h);
        for (int k = 0; k < n; ++k) {
          Order o;
          o.kind = channel_kind(c);
          o.price = uniform_int(rng, plo, phi);
          o.volume = uniform_int(rng, vlo, vhi);
          o.source = OrderSource::Generated;
          out.push_back(o);
        }
      }
    }
  }
  shuffle(std::span<Order>(out), rng);
  const TimeMs step = out.empty() ? 0 : kMillisPerMinute / static_cast<TimeMs>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].id = i + 1;
    out[i].interval = step;
  }
  return out;
}

ImageStats implied_stats(const OrderImage& img) noexcept {
  ImageStats s;
  std::int64_t bids = 0;
  std::int64_t asks = 0;
  for (int c = 0; c < kImageChannels; ++c) {
    for (int h = 0; h < kImageHeight; ++h) {
      for (int w = 0; w < kImageWidth; ++w) {
        const auto v = static_cast<std::int64_t>(img.at(c, h, w));
        if (v == 0) continue;
        s.order_count += v;
        const double lever = static_cast<double>(v * (w - kImageWidth / 2));
        if (c == 0) {
          bids += v;
          s.net_pressure += lever;
        } else if (c == 1) {
          asks += v;
          s.net_pressure -= lever;
        }
      }
    }
  }
  if (bids + asks > 0) s.buy_ratio = static_cast<double>(bids) / static_cast<double>(bids + asks);
  return s;
}

void write_image(const std::filesystem::path& path, const OrderImage& img) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image " + path.string());
    out.write(reinterpret_cast<const char*>(img.cells.data()), static_cast<std::streamsize>(img.cells.size()));
  }
  std::ofstream side(path.string() + ".json");
  side << nlohmann::json{{"ref_mid", img.ref_mid}, {"minute", img.minute}}.dump(2) << '\n';
}

OrderImage read_image(const std::filesystem::path& path) {
  OrderImage img;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  in.read(reinterpret_cast<char*>(img.cells.data()), static_cast<std::streamsize>(img.cells.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.cells.size())) throw Error("image truncated: " + path.string());
  for (auto c : img.cells)
    if (c > kMaxCellCount) throw Error("image cell above 100: " + path.string());
  std::ifstream side(path.string() + ".json");
  if (!side) throw Error("missing image sidecar for " + path.string());
  const auto j = nlohmann::json::parse(side);
  img.ref_mid = j.at("ref_mid").get<Ticks>();
  img.minute = j.at("minute").get<std::int64_t>();
  return img;
}

void write_image_png(const std::filesystem::path& path, const OrderImage& img) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error("cannot write png " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, kImageWidth, kImageHeight, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::array<png_byte, 3 * kImageWidth> row{};
  // volume slot 0 at the bottom
  for (int h = kImageHeight - 1; h >= 0; --h) {
    for (int w = 0; w < kImageWidth; ++w)
      for (int c = 0; c < kImageChannels; ++c)
        row[static_cast<std::size_t>(3 * w + c)] = static_cast<png_byte>(img.at(c, h, w) * 5 / 2);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

} // namespace mars
