#include "rng.hpp"

#include <sstream>

#include "error.hpp"

namespace csf {

std::vector<std::uint64_t> Rng::state() const {
  std::ostringstream out;
  out << engine_;
  std::istringstream in(out.str());
  std::vector<std::uint64_t> words;
  std::uint64_t w = 0;
  while (in >> w) words.push_back(w);
  return words;
}

void Rng::set_state(const std::vector<std::uint64_t>& words) {
  std::ostringstream out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out << ' ';
    out << words[i];
  }
  std::istringstream in(out.str());
  std::mt19937_64 restored;
  in >> restored;
  require(!in.fail(), ErrorCode::io, "corrupt random-stream state");
  engine_ = restored;
}

std::uint64_t hash_name(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace csf
