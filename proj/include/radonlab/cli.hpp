#pragma once

#include "radonlab/heis.hpp"

#include <iosfwd>
#include <map>

namespace radonlab::cli {

struct UsageError : Error {
    using Error::Error;
};

// Sectioned key=value text. Keys are stored as "section.key"; keys before any section have no prefix.
class Config {
  public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    std::string require(const std::string& key) const;
    std::string str(const std::string& key, const std::string& def) const;
    double num(const std::string& key, double def) const;
    int integer(const std::string& key, int def) const;
    std::vector<double> list(const std::string& key, const std::vector<double>& def) const;
    std::vector<int> ints(const std::string& key, const std::vector<int>& def) const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

struct CheckRecord {
    int criterion = 0;
    std::string name;
    std::string status;  // pass | fail | info
    double value = 0.0;
    double threshold = 0.0;
    double runtime = 0.0;
};

struct RunReport {
    std::vector<CheckRecord> checks;
    void add(int criterion, const std::string& name, bool pass, double value, double threshold, double runtime = 0.0);
    void info(int criterion, const std::string& name, double value, double runtime = 0.0);
    bool failed() const;
    // runtime is left out so that repeated runs produce identical files
    std::string csv() const;
    static RunReport from_csv(const std::string& text);
};

// grid, cutoffs, surfaces and blocks shared by the subcommands
struct Scenario {
    std::string name;
    ops::Grid grid;
    ops::CutoffChain chain;
    vfalg::GammaSpec gamma;
    vfalg::DilationExponents e;
    std::vector<ops::BlockSpec> blocks;
    int nu = 1;
    int mu0 = 1;
    double a = 1.0;
};
Scenario make_scenario(const Config& cfg, int refine = 0);
kernels::DyadicKernel scenario_kernel(const Config& cfg, const Scenario& s, int J);
vfalg::FieldList scenario_fields(const Config& cfg, std::vector<double>& x0);

struct Context {
    Config cfg;
    std::string out_dir;
    std::uint64_t seed = 1;
    int refine = 0;
    std::ostream* log = nullptr;
};

int cmd_ball(const Context& ctx);
int cmd_kernel(const Context& ctx);
int cmd_apply(const Context& ctx);
int cmd_norms(const Context& ctx);
int cmd_maximal(const Context& ctx);
int cmd_heisenberg(const Context& ctx);
int cmd_report(const Context& ctx);

// full command line entry point; returns the process exit code
int run(int argc, char** argv);

void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace radonlab::cli
