#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "xpnet/sim_time.hpp"
#include "xpnet/types.hpp"

namespace xpnet {

// Pacing state shared by every controller. min_rate <= rate <= max_rate.
struct RateState {
  double rate = 25e9;
  double min_rate = 1e8;
  double max_rate = 25e9;
  std::optional<SimTime> last_feedback;
};

// Sender pacing. Feedback is a congestion signal only; it never drives
// retransmission or completion.
class RateController {
 public:
  virtual ~RateController() = default;
  virtual std::string_view name() const = 0;
  virtual void OnFeedback(const Packet& feedback, SimTime now) = 0;
  virtual const RateState& state() const = 0;
  double rate() const { return state().rate; }
};

// Always paces at max_rate.
class NullController final : public RateController {
 public:
  NullController(double min_rate, double max_rate);
  std::string_view name() const override { return "none"; }
  void OnFeedback(const Packet& feedback, SimTime now) override;
  const RateState& state() const override { return state_; }

 private:
  RateState state_;
};

struct AimdParams {
  double min_rate = 1e8;
  double max_rate = 25e9;
  double additive_step = 1e9;
  // Additive increase is applied at most once per interval (one feedback
  // round trip).
  SimTime increase_interval = Micros(5);
  double decrease_factor = 0.5;
  // Repeated marks within this window cause a single decrease.
  SimTime decrease_guard = Micros(10);
  // A silence longer than this before a feedback packet counts as congestion.
  SimTime gap_threshold = SimTime::Max();

  void Validate() const;
};

class AimdController final : public RateController {
 public:
  explicit AimdController(const AimdParams& params);
  std::string_view name() const override { return "aimd"; }
  void OnFeedback(const Packet& feedback, SimTime now) override;
  const RateState& state() const override { return state_; }

 private:
  void Decrease(SimTime now);

  AimdParams params_;
  RateState state_;
  std::optional<SimTime> last_increase_;
  std::optional<SimTime> last_decrease_;
};

enum class ControllerKind { kNone, kAimd };

struct CongestionConfig {
  ControllerKind kind = ControllerKind::kAimd;
  AimdParams aimd;
  // One feedback packet per this many received fragments.
  std::uint32_t feedback_aggregation = 1;
};

std::unique_ptr<RateController> MakeController(const CongestionConfig& cfg);

// Receiver-side feedback: one ACK (or CNP when any covered fragment was
// ECN-marked) per `aggregation` placed fragments, flushed on the last
// fragment of a message. Lost fragments produce nothing.
class FeedbackGenerator {
 public:
  FeedbackGenerator(std::uint32_t aggregation, QpId reply_qp);

  std::optional<Packet> OnDataReceived(const Packet& data);
  std::uint64_t emitted() const { return emitted_; }

 private:
  std::uint32_t aggregation_;
  QpId reply_qp_;
  std::uint32_t pending_ = 0;
  bool pending_ecn_ = false;
  std::uint64_t emitted_ = 0;
};

}  // namespace xpnet
