#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "intraday/market_data.hpp"

namespace fixtures {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("intraday_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline intraday::Date date(int y, unsigned m, unsigned d) {
  return intraday::Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

/// Dense panel on consecutive calendar days starting at `first`, volume from fn(c, d, t)
/// and constant prices; fn returning a negative value leaves the cell absent.
inline intraday::MinutePanel make_panel(std::size_t companies, std::size_t days, const intraday::Date& first,
                                        const std::function<double(std::size_t, std::size_t, int)>& fn) {
  std::vector<std::string> tickers;
  for (std::size_t c = 0; c < companies; ++c) tickers.push_back("T" + std::to_string(100 + c));
  std::vector<intraday::Date> ds;
  for (std::size_t d = 0; d < days; ++d) ds.push_back(intraday::add_days(first, static_cast<int>(d)));
  intraday::DensePanelWriter w(tickers, ds);
  for (std::size_t c = 0; c < companies; ++c)
    for (std::size_t d = 0; d < days; ++d)
      for (int t = intraday::kFirstMinute; t <= intraday::kLastMinute; ++t) {
        const double v = fn(c, d, t);
        if (v >= 0.0) w.set(c, d, t, intraday::Ohlcv{v, 10.0, 10.0, 10.0, 10.0});
      }
  return std::move(w).finish();
}

}  // namespace fixtures
