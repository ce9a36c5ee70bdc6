#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cmtda/common.hpp"

namespace cmtda {

// Shared on-disk container: one "CMTDA <kind> <version>" line, key=value
// header lines, a "---" separator, then a raw little-endian binary payload.
// Used for checkpoints, weather vectors, and prototype snapshots.

void write_container(const std::string& path, const std::string& kind,
                     const std::vector<std::pair<std::string, std::string>>& fields,
                     const void* payload, std::size_t payload_bytes);

struct Container {
    std::string kind;
    int version = 0;
    std::map<std::string, std::string> fields;
    std::vector<char> payload;
};

// Reads and validates a container. Throws FileMissingError if absent,
// FormatError on a bad magic line, version != 1, or a payload shorter than
// the header's payload_bytes field.
Container read_container(const std::string& path, const std::string& expect_kind);

}  // namespace cmtda
