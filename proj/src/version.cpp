#include "zfs/version.hpp"

namespace zfs {

const char* code_version() { return "0.1.0"; }

}  // namespace zfs
