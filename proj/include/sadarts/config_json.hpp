#pragma once

#include "sadarts/data.hpp"
#include "sadarts/oracle.hpp"
#include "sadarts/search.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace sadarts {

using Json = nlohmann::json;

/// Reads fields of one JSON object and rejects any it did not ask for.
class JsonFields {
 public:
  JsonFields(const Json& object, std::string where);

  bool has(const std::string& key) const;
  const Json& at(const std::string& key);

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) fail("missing field '" + key + "'");
    return convert<T>(key);
  }

  /// Throws SchemaError listing unknown keys.
  void finish() const;
  [[noreturn]] void fail(const std::string& message) const;

 private:
  template <typename T>
  T convert(const std::string& key) {
    used_.insert(key);
    try {
      return object_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail("field '" + key + "' has the wrong type");
    }
  }

  const Json& object_;
  std::string where_;
  std::set<std::string> used_;
};

Json to_json(const StackSpec& s);
StackSpec stack_from_json(const Json& j);
Json to_json(const DatasetSpec& s);
DatasetSpec dataset_from_json(const Json& j);
Json to_json(const RegularizerSpec& s);
RegularizerSpec regularizer_from_json(const Json& j);
Json to_json(const SearchConfig& c);
SearchConfig search_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

}  // namespace sadarts
