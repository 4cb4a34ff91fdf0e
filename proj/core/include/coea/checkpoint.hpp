#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "coea/matrix.hpp"

namespace coea {

using Json = nlohmann::ordered_json;

// Matrices serialize as {"rows":r,"cols":c,"data":[...]} with full round-trip
// precision; vectors as plain arrays.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& j);

// Atomic write: serialize to `path.tmp`, fsync-free rename over `path`.
void write_json_file(const std::string& path, const Json& j);
Json read_json_file(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// FNV-1a 64 digest of the file bytes, 16 lowercase hex chars.
std::string file_digest(const std::string& path);

}  // namespace coea
