#include "mbk/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mbk {

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_json.empty() ? nlohmann::json(nullptr)
                                      : nlohmann::json::parse(config_json, nullptr, false);
    j["seed"] = seed;
    j["inputs_hash"] = inputs_hash;
    j["outputs"] = outputs;
    return j.dump(2);
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("manifest: cannot open " + path + " for writing");
    }
    out << to_json() << '\n';
}

std::string content_hash(const std::vector<std::string>& parts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& part : parts) {
        h = fnv1a64(part, h);
        h = fnv1a64("\x1f", h);  // separator so concatenations cannot collide
    }
    std::ostringstream out;
    out << std::hex;
    for (int i = 15; i >= 0; --i) {
        out << ((h >> (4 * i)) & 0xF);
    }
    return out.str();
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace mbk
