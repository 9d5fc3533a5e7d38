#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <Eigen/Core>

namespace ddnerf {

/// Parses "key = value" lines. '#' starts a comment; blank lines are
/// skipped. Throws std::invalid_argument on a line without '='.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Round-trip precision ("%.17g").
std::string format_double(double v);
std::string format_bool(bool b);
/// "x,y,z" with round-trip precision.
std::string format_vec3(const Eigen::Vector3d& v);

// Parsers name the key in their error messages.
double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
Eigen::Vector3d parse_vec3(const std::string& key, const std::string& value);

std::string trim(const std::string& s);

}  // namespace ddnerf
