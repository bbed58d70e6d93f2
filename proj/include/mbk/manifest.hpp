#pragma once

#include <string>
#include <vector>

#include "mbk/common.hpp"

namespace mbk {

/// Record written alongside every artifact-producing command: what ran, with
/// which resolved configuration and seed, over which inputs (content hash),
/// producing which files.
struct RunManifest {
    std::string command;
    std::string config_json;  // resolved configuration document
    std::uint64_t seed = 0;
    std::string inputs_hash;  // hex content hash of all input bytes
    std::vector<std::string> outputs;

    std::string to_json() const;
    void write(const std::string& path) const;
};

/// Content hash over a list of byte strings (file contents, config text).
std::string content_hash(const std::vector<std::string>& parts);
std::string read_file_bytes(const std::string& path);

}  // namespace mbk
