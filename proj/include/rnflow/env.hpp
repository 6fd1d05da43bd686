#pragma once

#include <cstdint>
#include <optional>

namespace rnflow {

/// SOURCE_DATE_EPOCH, when set, pins every emitted timestamp (checkpoint
/// provenance, log seconds column) so artifacts are byte-reproducible.
std::optional<std::int64_t> source_date_epoch();

inline bool deterministic_outputs() { return source_date_epoch().has_value(); }

/// RNFLOW_WORKERS selects the thread count for trajectory tiles; unset or
/// invalid means serial. Results never depend on the worker count.
std::size_t worker_count();

}  // namespace rnflow
