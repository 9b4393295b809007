#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <exception>

namespace acceptance {

std::vector<Criterion>& registry() {
  static std::vector<Criterion> r;
  return r;
}

Register::Register(int id, std::string name,
                   std::function<bool(std::string& detail)> fn) {
  registry().push_back({id, std::move(name), std::move(fn)});
}

}  // namespace acceptance

int main(int argc, char** argv) {
  int only = -1;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
  }

  auto& reg = acceptance::registry();
  std::sort(reg.begin(), reg.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  int failures = 0;
  int ran = 0;
  for (const auto& c : reg) {
    if (only > 0 && c.id != only) continue;
    ++ran;
    std::string detail;
    bool ok = false;
    auto t0 = std::chrono::steady_clock::now();
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    std::printf("criterion %02d %-38s %s (%.1fs)%s%s\n", c.id, c.name.c_str(),
                ok ? "PASS" : "FAIL", secs, detail.empty() ? "" : "  ",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (only > 0 && ran == 0) {
    std::printf("no criterion with id %d\n", only);
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
