// Runs meta Thompson sampling and feature-agnostic TS on one small
// semi-bandit instance and prints their cumulative regret.
#include <iostream>

#include "mtss/mtss.hpp"

int main() {
  mtss::ScenarioConfig scenario = mtss::preset("semi-6.1-desk").scenario;
  scenario.n_items = 100;

  for (auto kind : {mtss::AgentKind::mtss, mtss::AgentKind::agnostic}) {
    mtss::AgentConfig agent;
    agent.kind = kind;
    const mtss::RegretTrace trace = mtss::run_replication(scenario, agent, 500, 7);
    std::cout << mtss::to_string(kind) << ": cumulative regret after " << trace.rounds() << " rounds = "
              << trace.cumulative.back() << "\n";
  }
}
