#pragma once

#include <filesystem>

#include "squeal/signal.hpp"

namespace squeal {

enum class WavFormat { Pcm16, Float32 };

/// Reads a mono PCM 16-bit or IEEE float-32 WAV. PCM samples are scaled to [-1, 1).
AudioRecording read_wav(const std::filesystem::path& path);

/// Writes mono audio. PCM16 output is clipped to [-1, 1]; float output is
/// written as-is.
void write_wav(const std::filesystem::path& path, const AudioRecording& rec,
               WavFormat format = WavFormat::Float32);

}  // namespace squeal
