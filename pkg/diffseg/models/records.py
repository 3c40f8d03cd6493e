from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class TrainLogRecord:
    step: int
    t: int
    generator_loss: float
    disc_real_loss: float
    disc_fake_loss: float
    disc_accuracy: float
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)

    def deterministic_fields(self):
        """ everything except the wall clock """
        d = self.to_dict()
        d.pop('wall_time')
        return d
