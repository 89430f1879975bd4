#include "mars/types.hpp"

namespace mars {

char kind_code(OrderKind kind) noexcept {
  switch (kind) {
    case OrderKind::Ask: return 'A';
    case OrderKind::Bid: return 'B';
    case OrderKind::Cancel: return 'C';
  }
  return '?';
}

OrderKind kind_from_code(char code) {
  switch (code) {
    case 'A': return OrderKind::Ask;
    case 'B': return OrderKind::Bid;
    case 'C': return OrderKind::Cancel;
    default: throw Error(std::string("unknown order kind '") + code + "'");
  }
}

std::string_view source_name(OrderSource source) noexcept {
  switch (source) {
    case OrderSource::Generated: return "generated";
    case OrderSource::Injected: return "injected";
    case OrderSource::Replay: return "replay";
  }
  return "unknown";
}

OrderSource source_from_name(std::string_view name) {
  if (name == "generated") return OrderSource::Generated;
  if (name == "injected") return OrderSource::Injected;
  if (name == "replay") return OrderSource::Replay;
  throw Error("unknown order source '" + std::string(name) + "'");
}

} // namespace mars
