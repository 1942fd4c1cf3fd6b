#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "omix/mixture.hpp"

namespace omix {

inline constexpr int kModelFormatVersion = 1;

/// Versioned UTF-8 text form of a model:
///
///     omix-model 1
///     family mst
///     K 2
///     M 3
///     weights 0.4 0.6
///     component 0
///     mu ...
///     D ...            (row-major, M*M values)
///     A ...
///     nu ...
///     component 1
///     ...
///     end
///
/// Gaussian components carry `mu` and `sigma` (row-major). Floats are written
/// as shortest round-trip decimals so deserialize(serialize(m)) is bit-exact.
[[nodiscard]] std::string serialize(const MixtureModel& model);

/// Throws FormatError on a malformed file, an unknown version, or any
/// parameter that violates the model invariants.
[[nodiscard]] MixtureModel deserialize(std::string_view text);

void save_model(const MixtureModel& model, const std::filesystem::path& path);
[[nodiscard]] MixtureModel load_model(const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `v`.
[[nodiscard]] std::string format_double(double v);
/// Full-string decimal parse; throws FormatError on trailing garbage.
[[nodiscard]] double parse_double(std::string_view token);

}  // namespace omix
