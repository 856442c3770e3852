#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "naflab/analysis.hpp"
#include "naflab/suite.hpp"

namespace naflab {

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

// Full structural dump of a suite: every model parameter, the target, the
// infringing set and the caption, enough to reproduce results elsewhere.
nlohmann::json suite_to_json(const ModelSuite& suite);

nlohmann::json theorem2_to_json(const Theorem2Report& report);

}  // namespace naflab
