#pragma once

namespace zfs {

const char* code_version();

}  // namespace zfs
