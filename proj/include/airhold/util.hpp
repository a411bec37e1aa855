#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace airhold {

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Whole-string parse; returns false on trailing junk or an empty field.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, std::int64_t& out);

std::vector<std::string_view> split_csv_line(std::string_view line);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view data);

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Callers must write to disjoint slots.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

// Deterministic, platform-independent random stream (splitmix64 seeding of a
// xoshiro256** generator). The standard distributions are not portable across
// standard libraries, so the transforms live here too.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t s_[4];
};

}  // namespace airhold
