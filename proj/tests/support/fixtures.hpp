#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace fixtures {

inline std::filesystem::path dir() { return TGSEG_FIXTURES_DIR; }

inline nlohmann::json golden() {
  std::ifstream in(dir() / "golden.json");
  return nlohmann::json::parse(in);
}

struct PromptCase {
  std::string file;
  std::string expected;  // "!error" when extraction must fail
};

inline std::vector<PromptCase> prompt_cases() {
  std::ifstream in(dir() / "prompt_from_filename.tsv");
  std::vector<PromptCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    cases.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return cases;
}

}  // namespace fixtures
