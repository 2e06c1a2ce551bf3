#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gridprompt/grid_model.hpp"
#include "gridprompt/matpower_io.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(GRIDPROMPT_FIXTURE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline gridprompt::GridCase load_case(const std::string& name) {
    return gridprompt::load_matpower_file(fixture(name + ".m").string());
}

/// Frozen output of the independent reference solver (see fixtures/reference).
inline const nlohmann::json& reference() {
    static const nlohmann::json doc = nlohmann::json::parse(read_file(fixture("reference/reference_solutions.json")));
    return doc;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("gridprompt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
