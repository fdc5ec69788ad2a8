#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Scratch space shared by the test suites.
inline std::string test_dir() {
    auto dir = std::filesystem::temp_directory_path() / "hpt_tests";
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline std::string write_test_file(const std::string& name, const std::string& content) {
    std::string path = test_dir() + "/" + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
