#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "emlab/rom.hpp"

namespace emlab::feat {

// Ordered catalog of the per-step, per-well surrogate features. The layout
// follows the published feature groups, with well-block states and BHPs
// replicated over every well so injector targets can share one pooled model;
// quantities without a well tag refer to the target well. For six wells the
// base catalog has 84 entries.
struct FeatureCatalog {
  std::vector<std::string> names;  // base (memory-free) column names
  int memory = 0;                  // tau

  int base_size() const { return static_cast<int>(names.size()); }
  int augmented_size() const { return (1 + memory) * base_size(); }
  // Base name plus a _lag<k> suffix for the memory slots.
  std::vector<std::string> augmented_names() const;
};

FeatureCatalog make_catalog(const std::vector<hfm::WellSpec>& wells, int memory);

// Emits one catalog row for the target well from a single ROM step. Pure
// function of the surrogate data. cosine_flagged reports a zero-norm reduced
// state (the cosine feature is defined as 0 there).
Eigen::RowVectorXd extract_features(const rom::RomStepContext& ctx,
                                    const rom::TpwlOperators& ops,
                                    const rom::PodBasis& basis,
                                    const std::vector<hfm::WellSpec>& wells,
                                    int target_well,
                                    bool* cosine_flagged = nullptr);

// All steps of a run for one target well; rows align with rom.steps.
Eigen::MatrixXd feature_matrix(const rom::RomTrajectory& rom,
                               const rom::TpwlOperators& ops,
                               const rom::PodBasis& basis,
                               const std::vector<hfm::WellSpec>& wells,
                               int target_well);

// Memory augmentation: row n becomes [f^n f^{n-1} ... f^{n-tau}]; early rows
// repeat the first available row in the missing lag slots (padded flags set).
struct MemoryAugmented {
  Eigen::MatrixXd rows;
  std::vector<bool> padded;
};
MemoryAugmented apply_memory(const Eigen::MatrixXd& rows, int tau);

// Greedy catalog-order pruning: a column is kept when its |Pearson rho|
// against every already-retained column stays within rho_max; constant
// columns are dropped.
std::vector<int> prune_correlated(const Eigen::MatrixXd& x, double rho_max);

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x,
                               const std::vector<int>& retained);

// Table of cumulative classification features for one producer well: BHP
// deviations from the primary training schedule and producer-injector /
// test-training well-block pressure differences, as running RMS and mean.
std::vector<std::string> classification_feature_names(
    const std::vector<hfm::WellSpec>& wells);

Eigen::MatrixXd classification_features(const rom::RomTrajectory& rom,
                                        const rom::TpwlOperators& ops,
                                        const rom::PodBasis& basis,
                                        const std::vector<hfm::WellSpec>& wells,
                                        int producer_well);

}  // namespace emlab::feat
