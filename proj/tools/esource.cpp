#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "esource/analytics/recruitment.hpp"
#include "esource/analytics/stats.hpp"
#include "esource/cdim/source_model.hpp"
#include "esource/desk/deployment.hpp"
#include "esource/dnc/connector.hpp"
#include "esource/ehr/ehr_system.hpp"
#include "esource/error.hpp"
#include "esource/net/http.hpp"
#include "esource/odm/odm.hpp"
#include "esource/tss/study_system.hpp"
#include "esource/util/file.hpp"

using namespace esource;

namespace {

net::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void serve(const net::Router& router, const std::string& host, int port) {
  net::HttpServer server(router);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  int bound = server.start(host, port);
  std::cout << "listening on " << host << ":" << bound << std::endl;
  server.wait();
  g_server = nullptr;
}

analytics::Arm parse_arm(const std::string& s) {
  auto a = analytics::arm_from_string(s);
  if (!a) throw Error(Errc::InvalidArgument, "arm must be T or C");
  return *a;
}

int odm_validate(const std::string& file) {
  auto bundle = odm::parse_study_bundle(read_file(file));
  auto report = odm::validate_extensions(bundle);
  for (const auto& f : report.findings) {
    std::cout << (f.severity == odm::Severity::Error ? "error " : "warning ") << odm::to_string(f.code) << " "
              << f.subject << ": " << f.message << "\n";
  }
  std::cout << bundle.study_oid << ": " << bundle.forms.size() << " forms, " << bundle.queries.size()
            << " queries, " << report.findings.size() << " findings\n";
  return report.has_errors() ? 1 : 0;
}

std::string eval_analyze(const std::string& log_path, const std::vector<std::string>& countries) {
  auto log = analytics::RecruitmentLog::load(log_path);
  if (!countries.empty()) log = log.restricted_to({countries.begin(), countries.end()});
  std::ostringstream out;
  auto table = analytics::tabulate_recruitment(log);
  out << "Recruitment of subjects by site\n\n" << analytics::format_table(table) << "\n";
  out << std::fixed << std::setprecision(0) << "Greece and Poland share: " << 100 * table.share({"Greece", "Poland"})
      << "%\n\n";

  auto rates = analytics::weekly_rates(log);
  auto means = analytics::mean_weekly_rate(rates);
  std::map<std::string, std::pair<double, double>> pairs;
  for (const auto& r : rates) {
    if (r.pair_id.empty()) continue;
    (r.arm == analytics::Arm::T ? pairs[r.pair_id].first : pairs[r.pair_id].second) = r.per_week;
  }
  analytics::PairedSample sample;
  for (const auto& [id, p] : pairs) sample.pairs.push_back(p);
  out << std::setprecision(2) << "Randomized per practice-week (matched pairs): T " << means.t.value_or(0) << ", C "
      << means.c.value_or(0) << "\n";
  if (!sample.pairs.empty()) {
    auto w = analytics::wilcoxon_signed_rank(sample);
    out << std::setprecision(4) << "Wilcoxon signed-rank, " << w.n_used << " pairs: W+ " << w.w_plus << ", W- "
        << w.w_minus << ", p " << w.p_two_sided << (w.exact ? " (exact)" : " (normal approximation)") << "\n";
  }
  out << "\n";

  auto c = analytics::completion_rates(log);
  auto show = [&](const char* name, const analytics::CompletionFraction& t, const analytics::CompletionFraction& k) {
    out << name << ": T " << t.completed << "/" << t.started << ", C " << k.completed << "/" << k.started;
    if (t.started && k.started) {
      auto r = analytics::two_sample_proportion_test(
          {static_cast<long>(t.completed), static_cast<long>(t.started), static_cast<long>(k.completed),
           static_cast<long>(k.started)});
      out << std::setprecision(4) << ", z " << r.z << ", p " << r.p_two_sided << ", exact p " << r.exact_two_sided;
    }
    out << "\n";
  };
  show("Second CROM given first", c.crom_t, c.crom_c);
  show("Second PROM given first", c.prom_t, c.prom_c);
  return out.str();
}

Date parse_date(const std::string& s) {
  auto d = parse_iso_date(s);
  if (!d) throw Error(Errc::InvalidArgument, "bad date " + s);
  return *d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eSource research infrastructure: study system, data node connectors and simulated EHRs"};
  app.require_subcommand(1);

  auto* odm_cmd = app.add_subcommand("odm", "Study document tools")->require_subcommand(1);
  std::string odm_file;
  auto* validate = odm_cmd->add_subcommand("validate", "Parse and check an extended ODM study file");
  validate->add_option("file", odm_file)->required()->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("sim", "Simulated EHR")->require_subcommand(1);
  int sim_size = 200;
  std::uint64_t sim_seed = 42;
  std::vector<std::string> sim_practices{"P1"};
  auto* seed = sim->add_subcommand("seed", "Generate a population and print a summary");
  seed->add_option("--size", sim_size);
  seed->add_option("--seed", sim_seed);
  seed->add_option("--practice", sim_practices);
  std::string sim_source = "asseco", sim_host = "127.0.0.1", sim_dir;
  int sim_port = 8081;
  auto* sim_serve = sim->add_subcommand("serve", "Serve one EHR over HTTP");
  sim_serve->add_option("--size", sim_size);
  sim_serve->add_option("--seed", sim_seed);
  sim_serve->add_option("--practice", sim_practices);
  sim_serve->add_option("--source", sim_source)->check(CLI::IsMember({"asseco", "vision", "transhis"}));
  sim_serve->add_option("--host", sim_host);
  sim_serve->add_option("--port", sim_port);
  sim_serve->add_option("--data-dir", sim_dir);

  auto* tss_cmd = app.add_subcommand("tss", "Trial support system")->require_subcommand(1);
  std::string tss_dir, tss_token, tss_host = "127.0.0.1";
  int tss_port = 8080;
  std::uint64_t tss_seed = 42;
  auto* tss_serve = tss_cmd->add_subcommand("serve", "Serve the study system over HTTP");
  tss_serve->add_option("--data-dir", tss_dir);
  tss_serve->add_option("--token", tss_token, "Required x-site-token value");
  tss_serve->add_option("--host", tss_host);
  tss_serve->add_option("--port", tss_port);
  tss_serve->add_option("--seed", tss_seed, "Randomization seed");

  auto* dnc_cmd = app.add_subcommand("dnc", "Data node connector")->require_subcommand(1);
  dnc::DncConfig dc;
  std::string dnc_tss = "http://127.0.0.1:8080", dnc_ehr = "http://127.0.0.1:8081", dnc_dir, dnc_arm = "T",
              dnc_date, dnc_token;
  int dnc_console_port = 0;
  auto* dnc_run = dnc_cmd->add_subcommand("run", "Sync protocols and screen one clinic day");
  dnc_run->add_option("--practice", dc.practice_id)->required();
  dnc_run->add_option("--source", dc.source_id)->required();
  dnc_run->add_option("--site-key", dc.site_key)->required();
  dnc_run->add_option("--country", dc.country);
  dnc_run->add_option("--arm", dnc_arm);
  dnc_run->add_option("--pair", dc.pair_id);
  dnc_run->add_option("--tss", dnc_tss);
  dnc_run->add_option("--ehr", dnc_ehr);
  dnc_run->add_option("--token", dnc_token);
  dnc_run->add_option("--data-dir", dnc_dir);
  dnc_run->add_option("--date", dnc_date, "Clinic day, YYYY-MM-DD")->required();
  dnc_run->add_option("--console-port", dnc_console_port, "Keep serving the local form console on this port");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluation analytics")->require_subcommand(1);
  std::string eval_log, eval_report;
  std::vector<std::string> eval_countries;
  auto* analyze = eval_cmd->add_subcommand("analyze", "Recruitment table, rates and completion from a log");
  analyze->add_option("--log", eval_log)->required()->check(CLI::ExistingFile);
  analyze->add_option("--report", eval_report, "Also write the report to this file");
  analyze->add_option("--country", eval_countries);

  auto* desk_cmd = app.add_subcommand("desk", "Whole-system simulation")->require_subcommand(1);
  desk::DeskConfig desk_config;
  desk_config.deployment.sites = desk::default_sites();
  std::string desk_dir;
  int outage = 3;
  auto* desk_run = desk_cmd->add_subcommand("run", "Run the simulated study and check invariants");
  desk_run->add_option("--days", desk_config.clinic_days);
  desk_run->add_option("--population", desk_config.deployment.population);
  desk_run->add_option("--seed", desk_config.deployment.seed);
  desk_run->add_option("--data-dir", desk_dir);
  desk_run->add_option("--outage-day", outage, "Clinic day the study system is unreachable; -1 for none");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return odm_validate(odm_file);

    if (*seed || *sim_serve) {
      ehr::PopulationConfig pc;
      pc.size = sim_size;
      pc.seed = sim_seed;
      pc.practices = sim_practices;
      auto population = std::make_shared<const ehr::Population>(ehr::seed_population(pc));
      if (*seed) {
        auto s = ehr::summarize(*population);
        std::cout << nlohmann::json{{"size", s.size}, {"gord", s.with_gord}, {"ppi", s.with_ppi}, {"adults", s.adults}}
                         .dump(2)
                  << "\n";
        return 0;
      }
      std::optional<std::filesystem::path> dir;
      if (!sim_dir.empty()) dir = sim_dir;
      ehr::EhrSystem ehr(population, cdim::SourceRegistry::builtin().get(sim_source), cdim::TerminologyMap::builtin(),
                         dir);
      for (const auto& p : sim_practices) ehr.register_practice(p);
      serve(ehr.router(), sim_host, sim_port);
      return 0;
    }

    if (*tss_serve) {
      tss::TssConfig tc;
      if (!tss_dir.empty()) tc.data_dir = tss_dir;
      tc.seed = tss_seed;
      if (!tss_token.empty()) tc.site_token = tss_token;
      tss::StudySystem system(tc);
      serve(system.router(), tss_host, tss_port);
      return 0;
    }

    if (*dnc_run) {
      dc.arm = parse_arm(dnc_arm);
      if (!dnc_dir.empty()) dc.data_dir = dnc_dir;
      auto transport = std::make_shared<net::HttpTransport>();
      transport->set_endpoint(dc.tss_target, dnc_tss);
      transport->set_endpoint(dc.ehr_target, dnc_ehr);
      if (!dnc_token.empty()) transport->set_site_token(dnc_token);
      dnc::DataNodeConnector connector(dc, transport, cdim::SourceRegistry::builtin().get(dc.source_id));
      auto sync = connector.sync_protocols();
      std::cout << "sync: received " << sync.received << ", retired " << sync.retired << ", cursor " << sync.cursor
                << (sync.reachable ? "" : " (study system unreachable)") << "\n";
      for (const auto& e : connector.poll_clinic_day(parse_date(dnc_date))) {
        try {
          auto o = connector.screen_encounter(e);
          std::cout << o.pseudonym << " " << dnc::to_string(o.verdict) << (o.alert_id ? " alert " + *o.alert_id : "")
                    << "\n";
        } catch (const Error& err) {
          std::cout << e.patient_native_id << " " << err.what() << "\n";
        }
      }
      if (dnc_console_port) serve(connector.router(), "127.0.0.1", dnc_console_port);
      return 0;
    }

    if (*analyze) {
      auto text = eval_analyze(eval_log, eval_countries);
      std::cout << text;
      if (!eval_report.empty()) write_file(eval_report, text);
      return 0;
    }

    if (*desk_run) {
      if (!desk_dir.empty()) desk_config.deployment.data_dir = desk_dir;
      desk_config.tss_outage_day = outage < 0 ? std::nullopt : std::optional<int>(outage);
      auto report = desk::run_desk(desk_config);
      std::cout << report.summary();
      return report.all_green() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
