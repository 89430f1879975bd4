#include "mars/order_image.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace mars;
namespace fs = std::filesystem;

namespace {

Order make(OrderKind kind, Ticks price, Volume vol) {
  Order o;
  o.kind = kind;
  o.price = price;
  o.volume = vol;
  return o;
}

std::vector<Order> random_batch(std::mt19937_64& rng, Ticks ref, std::size_t n) {
  std::vector<Order> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<OrderKind>(rng() % 3);
    out.push_back(make(kind, ref - 20 + static_cast<Ticks>(rng() % 41), 1 + static_cast<Volume>(rng() % 20000)));
  }
  return out;
}

} // namespace

TEST_SUITE("order-image") {

TEST_CASE("empty batch gives a zero image") {
  const auto img = batch_to_image({}, 1000, CodecConfig::defaults());
  CHECK(img.total() == 0);
  CHECK(image_to_batch(img, 1, CodecConfig::defaults()).empty());
}

TEST_CASE("one bid at the reference mid") {
  const auto cfg = CodecConfig::defaults();
  const std::vector<Order> batch{make(OrderKind::Bid, 1000, cfg.volume_edges[0])};
  const auto img = batch_to_image(batch, 1000, cfg);
  CHECK(img.total() == 1);
  CHECK(img.at(0, 0, 16) == 1);
  CHECK(image_channel(OrderKind::Bid) == 0);
  CHECK(image_channel(OrderKind::Ask) == 1);
  CHECK(image_channel(OrderKind::Cancel) == 2);
}

TEST_CASE("cells clip at 100") {
  const auto cfg = CodecConfig::defaults();
  const std::vector<Order> batch(150, make(OrderKind::Ask, 1003, 100));
  const auto img = batch_to_image(batch, 1000, cfg);
  CHECK(img.at(1, cfg.volume_bucket(100), 19) == 100);
  CHECK(img.total() == 100);
}

TEST_CASE("single cell decodes to that many orders") {
  const auto cfg = CodecConfig::defaults();
  OrderImage img;
  img.ref_mid = 500;
  img.at(2, 4, 10) = 7;
  const auto batch = image_to_batch(img, 9, cfg);
  REQUIRE(batch.size() == 7);
  for (const auto& o : batch) {
    CHECK(o.kind == OrderKind::Cancel);
    CHECK(cfg.volume_bucket(o.volume) == 4);
    CHECK(cfg.price_bucket(o.price, 500) == 10);
  }
  CHECK(image_to_batch(img, 9, cfg) == batch);
}

TEST_CASE("count conservation and round trip on random batches") {
  const auto cfg = CodecConfig::defaults();
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Ticks ref = 2000 + trial;
    const auto batch = random_batch(rng, ref, 300);
    const auto img = batch_to_image(batch, ref, cfg, trial);
    CHECK(img.total() == 300); // at most 300 orders spread over many cells, none near 100
    const auto back = image_to_batch(img, static_cast<std::uint64_t>(trial), cfg);
    CHECK(back.size() == batch.size());
    CHECK(batch_to_image(back, ref, cfg, trial) == img);
  }
}

TEST_CASE("image to batch to image is the identity on arbitrary images") {
  const auto cfg = CodecConfig::defaults();
  std::mt19937_64 rng(4);
  OrderImage img;
  img.ref_mid = 800;
  for (auto& c : img.cells) c = rng() % 5 == 0 ? static_cast<std::uint8_t>(rng() % 101) : 0;
  const auto batch = image_to_batch(img, 33, cfg);
  CHECK(batch_to_image(batch, 800, cfg) == img);
}

TEST_CASE("translation invariance") {
  const auto cfg = CodecConfig::defaults();
  std::mt19937_64 rng(8);
  auto batch = random_batch(rng, 1000, 200);
  const auto a = batch_to_image(batch, 1000, cfg);
  for (auto& o : batch) o.price += 37;
  CHECK(batch_to_image(batch, 1037, cfg).cells == a.cells);
}

TEST_CASE("implied stats") {
  OrderImage zero;
  const auto s0 = implied_stats(zero);
  CHECK(s0.order_count == 0);
  CHECK_FALSE(s0.buy_ratio);
  CHECK(s0.net_pressure == 0.0);

  OrderImage bids;
  bids.at(0, 3, 20) = 5;
  bids.at(2, 3, 20) = 9;
  const auto sb = implied_stats(bids);
  CHECK(sb.order_count == 14);
  REQUIRE(sb.buy_ratio);
  CHECK(*sb.buy_ratio == 1.0);
  CHECK(sb.net_pressure == 5.0 * 4);

  OrderImage mirror;
  mirror.at(0, 1, 12) = 6; // bids below the mid
  mirror.at(1, 1, 12) = 6; // asks at the same slot
  CHECK(implied_stats(mirror).net_pressure == 0.0);
  CHECK(*implied_stats(mirror).buy_ratio == 0.5);
}

TEST_CASE("raw image file and png export") {
  const auto dir = fs::temp_directory_path() / "mars_image_test";
  fs::create_directories(dir);
  OrderImage img;
  img.ref_mid = 12345;
  img.minute = 42;
  img.at(1, 31, 0) = 100;
  img.at(0, 0, 31) = 3;
  write_image(dir / "m.img", img);
  CHECK(fs::file_size(dir / "m.img") == static_cast<std::uintmax_t>(kImageCells));
  CHECK(fs::exists(dir / "m.img.json"));
  CHECK(read_image(dir / "m.img") == img);

  write_image_png(dir / "m.png", img);
  std::ifstream png(dir / "m.png", std::ios::binary);
  char sig[8]{};
  png.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
  CHECK_THROWS_AS(read_image(dir / "missing.img"), Error);
  fs::remove_all(dir);
}

} // TEST_SUITE
