#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "unlearn/errors.hpp"

namespace unlearn {

// Writes via a temp file in the same directory plus rename, so readers never
// observe a half-written output.
inline void atomic_write_text(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("atomic_write_text: cannot open " + tmp.string());
        }
        out << content;
        if (!out) {
            throw DataError("atomic_write_text: write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        throw DataError("atomic_write_text: rename to " + path + " failed: " + ec.message());
    }
}

}  // namespace unlearn
