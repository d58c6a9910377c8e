#include "squeal/noise_class.hpp"

#include "squeal/signal.hpp"

namespace squeal {

std::string to_string(NoiseClass c) {
  switch (c) {
    case NoiseClass::Squeal: return "squeal";
    case NoiseClass::Click: return "click";
    case NoiseClass::Wirebrush: return "wirebrush";
    case NoiseClass::Artefact: return "artefact";
  }
  return "unknown";
}

NoiseClass noise_class_from_string(std::string_view name) {
  for (auto c : kAllNoiseClasses)
    if (to_string(c) == name) return c;
  throw Error("unknown noise class '" + std::string(name) + "'");
}

}  // namespace squeal
