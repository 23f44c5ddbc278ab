#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdi/dataset.hpp"

namespace pdi::testing {

inline AnnotationRecord make_record(std::string id, std::optional<double> h, double proxy,
                                    std::map<std::string, std::string> demo = {{"group", "g1"}},
                                    std::optional<double> pi = std::nullopt, std::optional<int> xi = std::nullopt) {
  AnnotationRecord r;
  r.instance_id = std::move(id);
  r.human_label = h;
  r.llm_labels["zero_shot"] = proxy;
  r.demographics.attributes = std::move(demo);
  r.pi = pi;
  r.xi = xi;
  return r;
}

}  // namespace pdi::testing
