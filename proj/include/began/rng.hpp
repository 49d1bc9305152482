#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace began {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent deterministic seed per (run seed, stream id). Streams keep
// weight init, training draws, data shuffling and sampling decorrelated
// while remaining pure functions of the run seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ED270B7A1FA6D5ull));
}

// mt19937_64 wrapper with hand-rolled uniform/normal transforms so that
// draw sequences are identical across standard library implementations.
// State serializes to a decimal string (checkpoint round trips are exact).
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0,1)
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only; u1 in (0,1] keeps the log finite.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = ((gen_() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    uint64_t raw() { return gen_(); }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
        if (is.fail()) throw std::runtime_error("Rng::set_state: malformed state string");
    }

    bool operator==(const Rng& other) const { return gen_ == other.gen_; }

  private:
    std::mt19937_64 gen_;
};

}  // namespace began
