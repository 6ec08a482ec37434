// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "bpfl/baselines.hpp"
#include "bpfl/errors.hpp"

namespace bpfl {
namespace {

std::vector<ClientState> make_clients(const std::vector<ClientArchitecture>& archs, const ProtocolConfig& cfg) {
  const std::size_t k = archs.size();
  const Dataset ds = gen_blobs(50 * k, 5, 3, 3.0, 11);
  const auto plan = partition_iid(ds, k, 12);
  const GlobalBypass bypass = make_bypass(5, {3}, 3, cfg.seed);
  std::vector<ClientState> clients;
  for (std::size_t i = 0; i < k; ++i) {
    const Dataset shard = ds.subset(plan[i]);
    auto [train, test] = train_test_split(shard.size(), 0.2, i);
    clients.push_back(make_client(static_cast<int>(i), archs[i], bypass, shard.subset(train), shard.subset(test), cfg));
  }
  return clients;
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

TEST(LocalOnly, ClientsAreIsolated) {
  ProtocolConfig cfg;
  cfg.lr_local = 1e-2;
  auto together = make_clients({{{6}}, {{4, 4}}, {{7}}}, cfg);
  std::vector<ClientState> single{together[1]};
  baseline_local_only(together, cfg, 3);
  baseline_local_only(single, cfg, 3);
  EXPECT_TRUE(bit_equal(together[1].local_body.params(), single[0].local_body.params()));
  EXPECT_TRUE(bit_equal(together[1].local_head.params(), single[0].local_head.params()));
}

TEST(LocalOnly, NoAggregationAndBypassUntouched) {
  ProtocolConfig cfg;
  auto clients = make_clients({{{6}}, {{5}}}, cfg);
  const GlobalBypass before = clients[0].bypass;
  const auto reports = baseline_local_only(clients, cfg, 2);
  ASSERT_EQ(reports.size(), 2U);
  for (const auto& r : reports) EXPECT_FALSE(r.aggregated);
  EXPECT_TRUE(bit_equal(clients[0].bypass, before));
}

TEST(FedAvg, SingleClientEqualsLocalTraining) {
  ProtocolConfig cfg;
  cfg.lr_local = 1e-2;
  auto fed = make_clients({{{6}}}, cfg);
  auto iso = fed;
  baseline_fedavg(fed, cfg, 3, false);
  baseline_local_only(iso, cfg, 3);
  EXPECT_TRUE(bit_equal(fed[0].local_body.params(), iso[0].local_body.params()));
  EXPECT_TRUE(bit_equal(fed[0].local_head.params(), iso[0].local_head.params()));
}

TEST(FedAvg, BroadcastsOneModel) {
  ProtocolConfig cfg;
  auto clients = make_clients({{{6}}, {{6}}, {{6}}}, cfg);
  const auto reports = baseline_fedavg(clients, cfg, 2, false);
  EXPECT_TRUE(reports.back().aggregated);
  for (const auto& c : clients) {
    EXPECT_TRUE(bit_equal(c.local_body.params(), clients[0].local_body.params()));
    EXPECT_TRUE(bit_equal(c.local_head.params(), clients[0].local_head.params()));
  }
}

TEST(FedAvg, FinetunePersonalizes) {
  ProtocolConfig cfg;
  cfg.lr_local = 1e-2;
  cfg.finetune_epochs = 2;
  auto clients = make_clients({{{6}}, {{6}}}, cfg);
  baseline_fedavg(clients, cfg, 2, true);
  EXPECT_FALSE(bit_equal(clients[0].local_body.params(), clients[1].local_body.params()));
}

TEST(FedAvg, HeterogeneousArchitecturesRejected) {
  ProtocolConfig cfg;
  auto clients = make_clients({{{6}}, {{5}}}, cfg);
  EXPECT_THROW(baseline_fedavg(clients, cfg, 1, false), ConfigError);
}

TEST(ParamCount, HandFormula) {
  ProtocolConfig cfg;
  auto clients = make_clients({{{6}}, {{4, 4}}}, cfg);
  const ParamCountReport r = param_count_report(clients, {});
  const std::size_t c0 = dense_count(5, 6) + dense_count(6, 3);
  const std::size_t c1 = dense_count(5, 4) + dense_count(4, 4) + dense_count(4, 3);
  ASSERT_GE(r.rows.size(), 2U);
  EXPECT_EQ(r.rows[0].params, c0);
  EXPECT_EQ(r.rows[1].params, c1);
  EXPECT_EQ(r.min_local, std::min(c0, c1));
  EXPECT_EQ(r.bypass_body, dense_count(5, 3));
  EXPECT_EQ(r.bypass_head, dense_count(3, 3));
  EXPECT_EQ(r.bypass_total, 18U + 12U);
  EXPECT_DOUBLE_EQ(r.ratio, 30.0 / static_cast<double>(std::min(c0, c1)));
  EXPECT_TRUE(r.bypass_lighter);
  EXPECT_NE(r.to_text().find("bypass total"), std::string::npos);
}

TEST(ParamCount, AblatedPartsCountZero) {
  ProtocolConfig cfg;
  auto clients = make_clients({{{6}}}, cfg);
  const ParamCountReport r = param_count_report(clients, {true, false, false});
  EXPECT_EQ(r.bypass_head, 0U);
  EXPECT_EQ(r.bypass_total, r.bypass_body);
  const ParamCountReport all = param_count_report(clients, {true, true, true});
  EXPECT_EQ(all.bypass_total, 0U);
}

}  // namespace
}  // namespace bpfl
