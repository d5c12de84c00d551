#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace xview {

/// Base of every error raised by the library. `kind()` is a short stable
/// identifier used by the CLI and the HTTP service when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define XVIEW_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  }

XVIEW_DEFINE_ERROR(CapacityError, "capacity");
XVIEW_DEFINE_ERROR(InvalidPoseError, "invalid_pose");
XVIEW_DEFINE_ERROR(EpisodeFinishedError, "episode_finished");
XVIEW_DEFINE_ERROR(ConfigError, "config");
XVIEW_DEFINE_ERROR(InvalidClipError, "invalid_clip");
XVIEW_DEFINE_ERROR(UnsupportedFormatError, "unsupported_format");
XVIEW_DEFINE_ERROR(CorruptShardError, "corrupt_shard");
XVIEW_DEFINE_ERROR(StateError, "state");
XVIEW_DEFINE_ERROR(InvalidGoalError, "invalid_goal");
XVIEW_DEFINE_ERROR(ProtocolError, "protocol");
XVIEW_DEFINE_ERROR(DatasetError, "dataset");
XVIEW_DEFINE_ERROR(NonFiniteLossError, "non_finite_loss");
XVIEW_DEFINE_ERROR(MappingError, "mapping");
XVIEW_DEFINE_ERROR(RangeError, "range");
XVIEW_DEFINE_ERROR(CapabilityError, "capability");
XVIEW_DEFINE_ERROR(IoError, "io");
XVIEW_DEFINE_ERROR(NotFoundError, "not_found");
XVIEW_DEFINE_ERROR(ValidationError, "validation");

#undef XVIEW_DEFINE_ERROR

}  // namespace xview
