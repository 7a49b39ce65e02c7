#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "shipcps/scenario/testbed.hpp"

namespace shipcps::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// NaN and infinities become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json windows_json(const std::vector<telemetry::Window>& windows) {
  json out = json::array();
  for (const auto& w : windows) out.push_back({w.start, w.end});
  return out;
}

double total_length(const std::vector<telemetry::Window>& windows) {
  double total = 0.0;
  for (const auto& w : windows) total += w.length();
  return total;
}

double mean_over(const std::vector<std::uint64_t>& bins, SimTime bin, double from_s, double to_s) {
  const auto first = static_cast<std::size_t>(from_seconds(from_s) / bin);
  const auto last = static_cast<std::size_t>((from_seconds(to_s) + bin - 1) / bin);
  if (last <= first) return 0.0;
  double total = 0.0;
  for (std::size_t i = first; i < last && i < bins.size(); ++i) total += static_cast<double>(bins[i]);
  return total / static_cast<double>(last - first);
}

std::uint64_t sum_over(const std::vector<std::uint64_t>& bins, SimTime bin, double from_s, double to_s) {
  const auto first = static_cast<std::size_t>(from_seconds(from_s) / bin);
  const auto last = static_cast<std::size_t>((from_seconds(to_s) + bin - 1) / bin);
  std::uint64_t total = 0;
  for (std::size_t i = first; i < last && i < bins.size(); ++i) total += bins[i];
  return total;
}

json phase_json(const Testbed& tb, const std::string& name, double start, double end,
                const std::vector<telemetry::RttSample>& rtt) {
  const auto& stats = tb.network_stats();
  const double secs = to_seconds(stats.bin);
  telemetry::FlowFilter modbus_rx;
  modbus_rx.node = netsim::kControllerNode;
  modbus_rx.direction = telemetry::Direction::kRx;
  modbus_rx.modbus_only = true;
  const auto series = telemetry::throughput(tb.trace().records(), modbus_rx, from_seconds(start), from_seconds(end),
                                            from_seconds(end - start));
  std::size_t samples = 0;
  for (const auto& s : rtt) samples += s.at >= from_seconds(start) && s.at < from_seconds(end);
  return {
      {"name", name},
      {"window", {start, end}},
      {"modbus_rtt_mean_s", number(telemetry::mean_rtt_seconds(rtt, from_seconds(start), from_seconds(end)))},
      {"rtt_samples", samples},
      {"modbus_rx_bps", series.empty() ? 0.0 : series.front() * 8.0},
      {"controller_rx_bps", mean_over(stats.controller_rx_bytes, stats.bin, start, end) * 8.0 / secs},
      {"controller_rx_frames", sum_over(stats.controller_rx_frames, stats.bin, start, end)},
      {"attacker_frames", sum_over(stats.attacker_tx_frames, stats.bin, start, end)},
      {"queue_drops", sum_over(stats.queue_drops, stats.bin, start, end)},
  };
}

json shedding_json(const Testbed& tb) {
  const auto& config = tb.plant().config();
  const auto& log = tb.plant_log();
  std::vector<double> least(config.loads.size(), 1.0);
  json timeline = json::array();
  std::vector<double> last;
  for (const auto& s : log) {
    for (std::size_t i = 0; i < least.size(); ++i) least[i] = std::min(least[i], s.load_status[i]);
    if (s.load_status == last) continue;
    last = s.load_status;
    json shed = json::object();
    for (std::size_t i = 0; i < last.size(); ++i) {
      if (last[i] < 1.0) shed[config.loads[i].id] = last[i];
    }
    timeline.push_back({{"t", s.t}, {"shed", shed}});
  }
  json fully = json::array();
  json min_status = json::object();
  std::size_t lc_shed = 0;
  for (std::size_t i = 0; i < least.size(); ++i) {
    const auto& load = config.loads[i];
    min_status[load.id] = least[i];
    if (least[i] <= 0.0) fully.push_back(load.id);
    if (least[i] < 1.0 && load.category != plant::LoadCategory::kPropulsion &&
        load.category != plant::LoadCategory::kMission) {
      ++lc_shed;
    }
  }
  return {{"fully_shed", fully}, {"load_center_loads_shed", lc_shed}, {"min_status", min_status},
          {"timeline", timeline}};
}

}  // namespace

json summarize(const Testbed& tb) {
  const auto& config = tb.config();
  const double dt = tb.plant().config().dt;
  const auto violations = telemetry::violation_windows(tb.plant_log(), dt);
  const auto over = tb.over_shed().intervals();
  const auto& ctrl = tb.controller();

  json operability = nullptr;
  try {
    operability = number(tb.operability().value());
  } catch (const telemetry::TelemetryError&) {
  }

  std::size_t halted = 0;
  std::size_t infeasible = 0;
  std::size_t relaxed = 0;
  for (const auto& c : ctrl.log()) {
    halted += c.halted;
    infeasible += c.infeasible;
    relaxed += c.ramp_relaxed;
  }

  const auto rtt = telemetry::rtt_series(tb.trace().records(), netsim::kControllerNode, 502);
  const auto& stats = tb.network_stats();
  json network = {
      {"trace_records", tb.trace().count()},
      {"kept_records", tb.trace().records().size()},
      {"drops_by_reason", stats.drops_by_reason},
      {"modified_frames", stats.modified_frames},
      {"modbus_rtt_mean_s", number(telemetry::mean_rtt_seconds(rtt, 0, from_seconds(tb.ran_until())))},
      {"rtt_samples", rtt.size()},
  };
  std::uint64_t queue_drops = 0;
  for (auto v : stats.queue_drops) queue_drops += v;
  network["queue_drops"] = queue_drops;
  if (const auto* m = tb.master()) {
    network["master"] = {{"timeouts", m->timeouts()}, {"resets", m->resets()}, {"discarded", m->discarded_responses()}};
  }

  json phases = json::array();
  phases.push_back(phase_json(tb, "run", 0.0, tb.ran_until(), rtt));
  for (const auto& p : config.phases) phases.push_back(phase_json(tb, p.name, p.start_s, p.end_s, rtt));

  json attacks = json::array();
  for (const auto& d : tb.dos_attacks()) {
    attacks.push_back({{"kind", "dos"},
                       {"window", {d->spec().start_s, d->spec().end_s}},
                       {"planned", d->stats().planned},
                       {"sent", d->stats().sent},
                       {"hard_crash", d->spec().hard_crash}});
  }
  for (const auto& m : tb.mitm_attacks()) {
    const auto& s = m->stats();
    attacks.push_back({{"kind", "mitm"},
                       {"window", {m->spec().start_s, m->spec().end_s}},
                       {"poison_frames", s.poison_frames},
                       {"relayed", s.relayed},
                       {"modified", s.modified},
                       {"decode_failures", s.decode_failures},
                       {"restore_frames", s.restore_frames}});
  }

  json loads = json::array();
  for (const auto& l : tb.plant().config().loads) loads.push_back(l.id);

  return {
      {"scenario", config.name},
      {"seed", config.seed},
      {"mode", std::string(controller::to_string(config.mode))},
      {"duration_s", config.duration_s},
      {"ran_until_s", tb.ran_until()},
      {"trace_hash", tb.trace().hash()},
      {"operability", operability},
      {"violation",
       {{"detected", !violations.empty()}, {"windows", windows_json(violations)}, {"total_s", total_length(violations)}}},
      {"over_shed", {{"intervals", windows_json(over)}, {"total_s", total_length(over)}}},
      {"shedding", shedding_json(tb)},
      {"controller",
       {{"cycles", ctrl.log().size()},
        {"starved", ctrl.starved_cycles()},
        {"halted", halted},
        {"infeasible", infeasible},
        {"ramp_relaxed", relaxed},
        {"writes_sent", ctrl.writes_sent()},
        {"writes_acked", ctrl.writes_acked()},
        {"write_failures", ctrl.write_failures()}}},
      {"network", network},
      {"phases", phases},
      {"faults",
       {{"scheduled", config.faults.size()},
        {"applied", tb.faults() ? tb.faults()->applied() : 0},
        {"cleared", tb.faults() ? tb.faults()->cleared() : 0}}},
      {"attacks", attacks},
      {"loads", loads},
  };
}

// ---------------------------------------------------------------- run

fs::path default_out_dir(const ScenarioConfig& config) {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return fs::path(env) / config.name;
  return fs::path("runs") / config.name;
}

namespace {

class StagedFile {
 public:
  StagedFile(fs::path dir, std::string name) : final_(dir / name), temp_(dir / (name + ".tmp")) {
    out_.open(temp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + temp_.string());
    out_ << std::setprecision(12);
  }
  ~StagedFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(temp_, ec);
    }
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + temp_.string());
    out_.close();
    fs::rename(temp_, final_);
    committed_ = true;
  }
  const fs::path& path() const { return final_; }

 private:
  fs::path final_;
  fs::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  telemetry::Fnv1a h;
  std::string buf(1 << 16, '\0');
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunResult run_scenario(ScenarioConfig config, const RunOptions& options) {
  if (options.seed) config.seed = *options.seed;
  if (options.until_s) {
    if (!(*options.until_s > 0.0)) throw ValidationError({{config.source, {}, "--until must be > 0"}});
    config.duration_s = *options.until_s;
  }
  RunResult result;
  if (options.out_dir) {
    result.out_dir = *options.out_dir;
  } else if (!config.outputs.directory.empty()) {
    result.out_dir = config.outputs.directory;
  } else {
    result.out_dir = default_out_dir(config);
  }

  Testbed tb(config);
  fs::create_directories(result.out_dir);

  std::optional<StagedFile> trace;
  std::optional<StagedFile> timeseries;
  if (config.outputs.trace) {
    trace.emplace(result.out_dir, "trace.jsonl");
    tb.set_trace_sink(&trace->stream());
  }
  if (config.outputs.timeseries) {
    timeseries.emplace(result.out_dir, "timeseries.csv");
    tb.set_timeseries_sink(&timeseries->stream());
  }

  const auto wall_start = std::chrono::steady_clock::now();
  tb.run();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  std::vector<fs::path> written;
  if (trace) {
    trace->commit();
    written.push_back(trace->path());
  }
  if (timeseries) {
    timeseries->commit();
    written.push_back(timeseries->path());
  }
  if (config.outputs.decisions) {
    StagedFile decisions(result.out_dir, "decisions.jsonl");
    for (const auto& c : tb.cycles()) {
      const auto& r = c.record;
      json line = {{"cycle", r.index},
                   {"t", to_seconds(r.started_at)},
                   {"decided_at", to_seconds(r.decided_at)},
                   {"starved", r.starved},
                   {"halted", r.halted},
                   {"responses", r.responses},
                   {"failures", r.failures},
                   {"inputs_digest", r.inputs_digest},
                   {"capacity_mw", r.capacity_mw},
                   {"demand_mw", r.demand_mw},
                   {"objective", r.objective},
                   {"infeasible", r.infeasible},
                   {"ramp_relaxed", r.ramp_relaxed},
                   {"nodes", r.nodes},
                   {"warnings", r.warnings}};
      json status = json::array();
      json seen = json::array();
      json truth = json::array();
      for (double v : r.status) status.push_back(number(v));
      for (double v : c.seen_ref_mw) seen.push_back(number(v));
      for (double v : c.true_ref_mw) truth.push_back(v);
      line["status"] = status;
      line["seen_ref_mw"] = seen;
      line["true_ref_mw"] = truth;
      line["true_available_mw"] = c.true_available_mw;
      line["true_served_mw"] = c.true_served_mw;
      decisions.stream() << line.dump() << '\n';
    }
    decisions.commit();
    written.push_back(decisions.path());
  }

  result.summary = summarize(tb);
  result.violation = result.summary["violation"]["detected"].get<bool>();
  {
    StagedFile summary(result.out_dir, "summary.json");
    summary.stream() << result.summary.dump(2) << '\n';
    summary.commit();
    written.push_back(summary.path());
  }

  double solve = 0.0;
  for (const auto& c : tb.controller().log()) solve += c.solve_seconds;
  json files = json::object();
  for (const auto& p : written) {
    files[p.filename().string()] = {{"bytes", fs::file_size(p)}, {"fnv1a", file_hash(p)}};
  }
  json manifest = {{"scenario", config.name},
                   {"source", config.source},
                   {"schema_version", config.schema_version},
                   {"seed", config.seed},
                   {"duration_s", config.duration_s},
                   {"trace_hash", tb.trace().hash()},
                   {"files", files},
                   // Wall-clock values live here only; every other artifact is a
                   // function of the scenario and seed.
                   {"generated_at", utc_now()},
                   {"wall_seconds", wall},
                   {"solve_seconds_total", solve}};
  StagedFile out(result.out_dir, "manifest.json");
  out.stream() << manifest.dump(2) << '\n';
  out.commit();
  return result;
}

// ---------------------------------------------------------------- report

namespace {

std::string fmt_windows(const json& windows) {
  if (windows.empty()) return "none";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  bool first = true;
  for (const auto& w : windows) {
    if (!first) out << ", ";
    out << '[' << w[0].get<double>() << ", " << w[1].get<double>() << ')';
    first = false;
  }
  return out.str();
}

std::string fmt_number(const json& v, int precision, double scale = 1.0) {
  if (v.is_null()) return "n/a";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v.get<double>() * scale;
  return out.str();
}

void print_columns(const fs::path& csv, const std::vector<std::string>& columns, std::ostream& out) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("missing " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::size_t> pick = {0};
  for (const auto& c : columns) {
    const auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw std::runtime_error("no column " + c + " in " + csv.string());
    const auto index = static_cast<std::size_t>(it - header.begin());
    if (index != 0) pick.push_back(index);  // time always leads
  }
  for (std::size_t k = 0; k < pick.size(); ++k) out << (k ? "," : "") << header[pick[k]];
  out << '\n';
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    for (std::size_t k = 0; k < pick.size(); ++k) out << (k ? "," : "") << cells.at(pick[k]);
    out << '\n';
  }
}

}  // namespace

void report(const fs::path& dir, std::ostream& out, const std::vector<std::string>& columns) {
  const auto path = dir / "summary.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  json s;
  try {
    s = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("unreadable " + path.string() + ": " + e.what());
  }
  if (!columns.empty()) {
    print_columns(dir / "timeseries.csv", columns, out);
    return;
  }

  out << "scenario     " << s.at("scenario").get<std::string>() << " (seed " << s.at("seed").get<std::uint64_t>()
      << ", " << s.at("mode").get<std::string>() << ", " << fmt_number(s.at("ran_until_s"), 1) << " s)\n";
  out << "trace hash   " << s.at("trace_hash").get<std::string>() << '\n';
  out << "operability  O = " << fmt_number(s.at("operability"), 4) << '\n';
  const auto& v = s.at("violation");
  out << "violations   " << fmt_windows(v.at("windows")) << "  total " << fmt_number(v.at("total_s"), 2) << " s\n";
  const auto& o = s.at("over_shed");
  out << "over-shed    " << fmt_windows(o.at("intervals")) << "  total " << fmt_number(o.at("total_s"), 2)
      << " s\n";

  const auto& c = s.at("controller");
  out << "controller   cycles " << c.at("cycles") << ", starved " << c.at("starved") << ", halted " << c.at("halted")
      << ", infeasible " << c.at("infeasible") << ", writes " << c.at("writes_acked") << '/' << c.at("writes_sent")
      << '\n';

  const auto& n = s.at("network");
  out << "network      records " << n.at("trace_records") << ", queue drops " << n.at("queue_drops")
      << ", modified packets " << n.at("modified_frames") << ", mean modbus RTT "
      << fmt_number(n.at("modbus_rtt_mean_s"), 2, 1e3) << " ms\n";
  for (const auto& [reason, count] : n.at("drops_by_reason").items()) {
    out << "             drops " << reason << ": " << count << '\n';
  }

  out << "phases\n";
  out << "  " << std::left << std::setw(14) << "name" << std::setw(20) << "window" << std::right << std::setw(12)
      << "rtt_ms" << std::setw(14) << "modbus_bps" << std::setw(14) << "ctrl_rx_bps" << std::setw(12) << "q_drops"
      << '\n';
  for (const auto& p : s.at("phases")) {
    std::ostringstream w;
    w << std::fixed << std::setprecision(1) << '[' << p.at("window")[0].get<double>() << ", "
      << p.at("window")[1].get<double>() << ')';
    out << "  " << std::left << std::setw(14) << p.at("name").get<std::string>() << std::setw(20) << w.str()
        << std::right << std::setw(12) << fmt_number(p.at("modbus_rtt_mean_s"), 2, 1e3) << std::setw(14)
        << fmt_number(p.at("modbus_rx_bps"), 0) << std::setw(14) << fmt_number(p.at("controller_rx_bps"), 0)
        << std::setw(12) << p.at("queue_drops").get<std::uint64_t>() << '\n';
  }

  for (const auto& a : s.at("attacks")) {
    out << "attack       " << a.at("kind").get<std::string>() << ' ' << fmt_windows(json::array({a.at("window")}));
    if (a.contains("modified")) out << "  modified " << a.at("modified") << ", relayed " << a.at("relayed");
    if (a.contains("sent")) out << "  sent " << a.at("sent") << " packets";
    out << '\n';
  }

  const auto& sh = s.at("shedding");
  out << "fully shed   ";
  if (sh.at("fully_shed").empty()) out << "none";
  for (std::size_t k = 0; k < sh.at("fully_shed").size(); ++k) {
    out << (k ? ", " : "") << sh.at("fully_shed")[k].get<std::string>();
  }
  out << "\nLC loads shed " << sh.at("load_center_loads_shed") << '\n';
  out << "shed-set timeline\n";
  for (const auto& e : sh.at("timeline")) {
    out << "  " << std::fixed << std::setprecision(2) << std::setw(9) << e.at("t").get<double>() << "  ";
    if (e.at("shed").empty()) out << "(none)";
    bool first = true;
    for (const auto& [id, status] : e.at("shed").items()) {
      out << (first ? "" : " ") << id << '=' << std::setprecision(2) << status.get<double>();
      first = false;
    }
    out << '\n';
  }
}

}  // namespace shipcps::scenario
