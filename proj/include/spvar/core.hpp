#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace spvar {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorKind { validation, numeric, io };

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
private:
    ErrorKind kind_;
};

#define SPVAR_DEFINE_ERROR(name, kind_value)                          \
    class name : public Error                                         \
    {                                                                 \
    public:                                                           \
        explicit name(const std::string& msg) : Error(kind_value, msg) {} \
    };

SPVAR_DEFINE_ERROR(ShapeError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(ValidationError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(StabilityError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(InsufficientDataError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(PreprocessingRequiredError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(EmptyMaskError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(EmptySampleError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(ConstraintInfeasibleError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(DomainError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(UndefinedMetricError, ErrorKind::validation)
SPVAR_DEFINE_ERROR(DegeneratePredictorError, ErrorKind::numeric)
SPVAR_DEFINE_ERROR(IoError, ErrorKind::io)

#undef SPVAR_DEFINE_ERROR

/// Iterative procedure ran out of iterations. Carries the last iterate
/// (may be empty when the procedure has no natural vector state).
class ConvergenceError : public Error
{
public:
    ConvergenceError(const std::string& msg, double residual, Vector last = {})
        : Error(ErrorKind::numeric, msg), residual_(residual), last_(std::move(last)) {}
    double residual() const noexcept { return residual_; }
    const Vector& last_iterate() const noexcept { return last_; }
private:
    double residual_;
    Vector last_;
};

// ---------------------------------------------------------------------------
// Warnings
// ---------------------------------------------------------------------------

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink()
{
    static WarningSink sink = [](const std::string& msg) {
        static std::mutex m;
        std::lock_guard<std::mutex> lk(m);
        std::cerr << "spvar warning: " << msg << '\n';
    };
    return sink;
}
} // namespace detail

/// Replace the process-wide warning sink. Pass an empty function to silence.
inline void set_warning_sink(WarningSink sink) { detail::warning_sink() = std::move(sink); }

inline void warn(const std::string& msg)
{
    auto& sink = detail::warning_sink();
    if (sink) sink(msg);
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derive an independent seed for a labeled task from a top-level seed.
/// Every random consumer in the library draws from its own labeled stream,
/// so results never depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
{
    std::uint64_t h = 0xCBF29CE484222325ull; // FNV-1a over the label
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return splitmix64(splitmix64(seed ^ h) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
{
    return Rng(derive_seed(seed, label, index));
}

// ---------------------------------------------------------------------------
// Parallel loop with deterministic output slots
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write into
/// per-index slots so the merged result is independent of the thread count.
/// The first exception thrown by any task is rethrown after all workers join.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn)
{
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    threads = std::min(threads, n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace spvar
