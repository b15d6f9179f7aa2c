#include "xpnet/congestion.hpp"

#include <algorithm>

namespace xpnet {

NullController::NullController(double min_rate, double max_rate) {
  state_.min_rate = min_rate;
  state_.max_rate = max_rate;
  state_.rate = max_rate;
}

void NullController::OnFeedback(const Packet& /*feedback*/, SimTime now) {
  state_.last_feedback = now;
}

void AimdParams::Validate() const {
  if (!(min_rate > 0.0) || !(max_rate >= min_rate)) {
    throw InvalidArgument("congestion rates must satisfy 0 < min_rate <= max_rate");
  }
  if (!(decrease_factor > 0.0 && decrease_factor < 1.0)) {
    throw InvalidArgument("decrease_factor must be in (0, 1)");
  }
  if (additive_step < 0.0) throw InvalidArgument("additive_step must be >= 0");
}

AimdController::AimdController(const AimdParams& params) : params_(params) {
  params_.Validate();
  state_.min_rate = params.min_rate;
  state_.max_rate = params.max_rate;
  state_.rate = params.max_rate;
}

void AimdController::Decrease(SimTime now) {
  if (last_decrease_ && now - *last_decrease_ < params_.decrease_guard) return;
  state_.rate = std::max(state_.min_rate, state_.rate * params_.decrease_factor);
  last_decrease_ = now;
}

void AimdController::OnFeedback(const Packet& feedback, SimTime now) {
  const bool gap = state_.last_feedback && now - *state_.last_feedback > params_.gap_threshold;
  state_.last_feedback = now;
  if (feedback.ecn || feedback.kind == PacketKind::kCnp || gap) {
    Decrease(now);
    return;
  }
  if (!last_increase_ || now - *last_increase_ >= params_.increase_interval) {
    state_.rate = std::min(state_.max_rate, state_.rate + params_.additive_step);
    last_increase_ = now;
  }
}

std::unique_ptr<RateController> MakeController(const CongestionConfig& cfg) {
  switch (cfg.kind) {
    case ControllerKind::kNone:
      return std::make_unique<NullController>(cfg.aimd.min_rate, cfg.aimd.max_rate);
    case ControllerKind::kAimd:
      return std::make_unique<AimdController>(cfg.aimd);
  }
  throw InvalidArgument("unknown congestion controller");
}

FeedbackGenerator::FeedbackGenerator(std::uint32_t aggregation, QpId reply_qp)
    : aggregation_(aggregation), reply_qp_(reply_qp) {
  if (aggregation_ == 0) throw InvalidArgument("feedback aggregation must be >= 1");
}

std::optional<Packet> FeedbackGenerator::OnDataReceived(const Packet& data) {
  ++pending_;
  pending_ecn_ = pending_ecn_ || data.ecn;
  if (pending_ < aggregation_ && !data.is_last) return std::nullopt;
  Packet fb;
  fb.src_node = data.dst_node;
  fb.dst_node = data.src_node;
  fb.kind = pending_ecn_ ? PacketKind::kCnp : PacketKind::kAck;
  fb.verb = data.verb;
  fb.qp_id = reply_qp_;
  fb.wqe_seq = data.wqe_seq;
  fb.placement_offset = data.placement_offset;
  pending_ = 0;
  pending_ecn_ = false;
  ++emitted_;
  return fb;
}

}  // namespace xpnet
