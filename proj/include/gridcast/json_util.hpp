// Copyright 2026 The gridcast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRIDCAST_JSON_UTIL_HPP
#define GRIDCAST_JSON_UTIL_HPP

#include <string>

#include <nlohmann/json.hpp>

namespace gridcast::detail {

/// Reads `key` into `field` when present; keeps the default otherwise.
template <typename T>
void json_field(const nlohmann::json& j, const char* key, T& field) {
  if (!j.is_object()) throw nlohmann::json::type_error::create(302, "config section must be an object", &j);
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

}  // namespace gridcast::detail

/// Field-wise JSON helpers; `j` and `v` name the json and the value.
#define GRIDCAST_JSON_FIELD(name) ::gridcast::detail::json_field(j, #name, v.name)
#define GRIDCAST_JSON_PUT(name) j[#name] = v.name

#endif  // GRIDCAST_JSON_UTIL_HPP
