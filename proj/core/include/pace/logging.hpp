#pragma once

namespace pace {

/// Applies PACE_LOG_LEVEL (error, warn, info, debug) to the default logger.
/// Unknown or missing values leave the level at warn.
void init_logging_from_env();

}  // namespace pace
