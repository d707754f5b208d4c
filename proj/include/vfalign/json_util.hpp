#pragma once

// JSON helpers that report the path of the offending field on failure.

#include "vfalign/common.hpp"

#include <json.hpp>

#include <string>

namespace vfalign::jsonio {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key);
std::string join(const std::string& path, std::size_t index);

const json& require(const json& j, const std::string& key, const std::string& path);
double require_number(const json& j, const std::string& key, const std::string& path);
int require_int(const json& j, const std::string& key, const std::string& path);
double number_or(const json& j, const std::string& key, double fallback, const std::string& path);
int int_or(const json& j, const std::string& key, int fallback, const std::string& path);
std::string string_or(const json& j, const std::string& key, const std::string& fallback,
                      const std::string& path);

Matrix to_matrix(const json& j, const std::string& path);
RowVector to_row(const json& j, const std::string& path);
json from_matrix(const Matrix& m);
json from_row(const Eigen::Ref<const RowVector>& v);

json read_file(const std::string& path);
void write_file(const std::string& path, const json& j);

}  // namespace vfalign::jsonio
