#pragma once

#include "survlda/trainer.hpp"

#include <filesystem>
#include <iosfwd>

namespace survlda {

inline constexpr int kModelFormatVersion = 1;

// Versioned line-oriented text. Reals are written with 17 significant
// digits so every field survives a round trip bit for bit.
void write_model(const FittedModel& model, std::ostream& out);
FittedModel read_model(std::istream& in);

void save_model(const FittedModel& model, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

} // namespace survlda
