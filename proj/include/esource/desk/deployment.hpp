#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esource/analytics/recruitment.hpp"
#include "esource/dnc/connector.hpp"
#include "esource/ehr/ehr_system.hpp"
#include "esource/net/http.hpp"
#include "esource/provenance/graph.hpp"
#include "esource/tss/study_system.hpp"
#include "esource/util/rng.hpp"
#include "esource/util/time.hpp"

namespace esource::desk {

struct SiteSpec {
  std::string practice_id;
  std::string country;
  std::string source_id;
  analytics::Arm arm = analytics::Arm::T;
  std::string pair_id;
};

/// The four-practice layout: two TRANSFoRm and two control practices,
/// paired across arms.
std::vector<SiteSpec> default_sites();

struct DeploymentConfig {
  std::vector<SiteSpec> sites = default_sites();
  int population = 200;
  std::uint64_t seed = 2016;
  Date start = make_date(2016, 3, 1);
  std::optional<std::filesystem::path> data_dir;
  std::string study_file;  // defaults to the shipped GORD protocol
};

/// One practice: its EHR installation and its connector.
struct Site {
  SiteSpec spec;
  std::unique_ptr<ehr::EhrSystem> ehr;
  std::unique_ptr<dnc::DataNodeConnector> dnc;
  std::string ehr_name() const { return "ehr:" + spec.practice_id; }
  std::string dnc_name() const { return "dnc:" + spec.practice_id; }
};

/// Study system, EHRs and connectors on one traced in-process network.
/// The workbench (study registration) is its own network origin.
class Deployment {
 public:
  explicit Deployment(DeploymentConfig config);

  const DeploymentConfig& config() const { return config_; }
  net::Network& network() { return network_; }
  ManualClock& clock() { return clock_; }
  tss::StudySystem& tss() { return *tss_; }
  std::vector<Site>& sites() { return sites_; }
  Site& site(const std::string& practice_id);
  const ehr::Population& population() const { return *population_; }

  /// Registers and activates the protocol through the workbench origin.
  std::string publish_study();
  void set_tss_reachable(bool reachable);

  /// Every connector graph stitched with the study system's.
  provenance::ProvenanceGraph combined_provenance() const;

 private:
  DeploymentConfig config_;
  ManualClock clock_;
  net::Network network_;
  std::shared_ptr<const ehr::Population> population_;
  std::unique_ptr<tss::StudySystem> tss_;
  std::vector<Site> sites_;
};

struct BehaviourConfig {
  double consent = 0.8;
  double crom2 = 0.85;
  double prom1 = 0.7;
  double prom2 = 0.8;
  double edit_prefilled = 0.1;  // chance a clinician corrects a pre-loaded weight
  int followup_after_days = 3;  // clinic days between baseline and follow-up
};

struct DeskConfig {
  DeploymentConfig deployment;
  BehaviourConfig behaviour;
  int clinic_days = 10;
  /// Clinic day (0-based) during which the study system is unreachable.
  std::optional<int> tss_outage_day = 3;
};

struct InvariantCheck {
  std::string name;
  bool ok = true;
  std::string detail;
};

struct DeskReport {
  int clinic_days = 0;
  std::size_t encounters = 0;
  std::size_t eligible = 0;
  std::size_t alerts = 0;
  std::size_t consented = 0;
  std::size_t submissions = 0;
  std::size_t verified = 0;
  std::size_t trace_entries = 0;
  analytics::RecruitmentTable table;
  nlohmann::json recruitment_report;
  std::vector<InvariantCheck> invariants;
  double seconds = 0;

  bool all_green() const;
  std::string summary() const;
};

/// Values a clinician or patient types into the form: every field that was
/// not pre-loaded, plus an occasional correction of a pre-loaded weight.
std::map<std::string, std::string> complete_form(const odm::FormDef& form, const dnc::PreparedForm& prepared,
                                                 Rng& rng, Date today, double edit_probability);

/// Runs the simulated study end to end and checks the architecture's
/// invariants over the resulting stores and network trace.
DeskReport run_desk(const DeskConfig& config);
/// As above on a deployment the caller keeps for inspection; the deployment
/// part of `config` is not used.
DeskReport run_desk(Deployment& d, const DeskConfig& config);

/// Invariant checks usable on any deployment after activity.
std::vector<InvariantCheck> check_invariants(Deployment& d);

}  // namespace esource::desk
