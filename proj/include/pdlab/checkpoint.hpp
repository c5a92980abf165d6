#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "pdlab/optim.hpp"
#include "pdlab/params.hpp"

namespace pdlab {

enum class CheckpointErrorCode {
  io_error,          // missing or unreadable files
  version_mismatch,  // manifest format_version differs from this build's
  corrupt_blob,      // malformed manifest or blob size disagreeing with it
  shape_mismatch,    // loaded parameter disagrees with the receiving store
};

struct CheckpointError : std::runtime_error {
  CheckpointErrorCode code;
  CheckpointError(CheckpointErrorCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  std::string stage;
  std::string config_hash;
};

// Layout on disk: dir/manifest.json (format version, metadata, parameter
// table in store order, optional optimizer section) + dir/params.bin
// (concatenated little-endian f64 values in manifest order) + dir/adam.bin
// (first then second moments per optimizer parameter) when optimizer state
// is included. Round trips are byte-exact.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const CheckpointMeta& meta, const Adam* adam = nullptr);

// Loading into an empty store creates all parameters from the manifest.
// Loading into a populated store requires the exact same parameter names and
// shapes (CheckpointError{shape_mismatch} naming the offender otherwise) and
// overwrites values and trainable flags. If adam is non-null and the
// checkpoint carries optimizer state, it is restored.
CheckpointMeta load_checkpoint(const std::filesystem::path& dir, ParamStore& params,
                               Adam* adam = nullptr);

}  // namespace pdlab
