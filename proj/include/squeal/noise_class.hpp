#pragma once

#include <array>
#include <string>
#include <string_view>

#include "squeal/error.hpp"

namespace squeal {

/// The four prototypical brake noise types.
enum class NoiseClass { Squeal, Click, Wirebrush, Artefact };

inline constexpr std::array<NoiseClass, 4> kAllNoiseClasses = {
    NoiseClass::Squeal, NoiseClass::Click, NoiseClass::Wirebrush, NoiseClass::Artefact};

std::string to_string(NoiseClass c);
/// Accepts the lower-case names produced by to_string; throws Error otherwise.
NoiseClass noise_class_from_string(std::string_view name);

}  // namespace squeal
