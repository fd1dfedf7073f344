/// Outcome of feeding one epoch's validation loss to [`Plateau`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauEvent {
    Improved,
    Waiting,
    /// The learning rate was multiplied by the factor.
    Reduced,
    /// Patience ran out with every allowed reduction already spent.
    Stop,
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Clone, Debug)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub max_drops: usize,
    best: f64,
    bad_epochs: usize,
    drops: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize, max_drops: usize) -> Self {
        Plateau {
            lr,
            factor,
            patience,
            max_drops,
            best: f64::INFINITY,
            bad_epochs: 0,
            drops: 0,
        }
    }

    pub fn drops(&self) -> usize {
        self.drops
    }

    pub fn observe(&mut self, val_loss: f64) -> PlateauEvent {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return PlateauEvent::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs < self.patience {
            return PlateauEvent::Waiting;
        }
        self.bad_epochs = 0;
        if self.drops == self.max_drops {
            return PlateauEvent::Stop;
        }
        self.drops += 1;
        self.lr *= self.factor;
        PlateauEvent::Reduced
    }
}
