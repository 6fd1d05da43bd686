#include "rnflow/env.hpp"

#include <cstdlib>
#include <string>

namespace rnflow {

std::optional<std::int64_t> source_date_epoch() {
    const char* raw = std::getenv("SOURCE_DATE_EPOCH");
    if (raw == nullptr || raw[0] == '\0') return std::nullopt;
    try {
        return std::stoll(raw);
    } catch (...) {
        return std::nullopt;
    }
}

std::size_t worker_count() {
    const char* raw = std::getenv("RNFLOW_WORKERS");
    if (raw == nullptr || raw[0] == '\0') return 1;
    try {
        const long long n = std::stoll(raw);
        return n > 1 ? static_cast<std::size_t>(n) : 1;
    } catch (...) {
        return 1;
    }
}

}  // namespace rnflow
