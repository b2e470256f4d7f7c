use rand::RngCore;

use crate::game::{Adversary, DeclaredAction, Environment, StrategyError};

/// Replays a fixed list of instances.
pub struct ObliviousSequence<E: Environment> {
    instances: Vec<(E::LossInstance, E::DynInstance)>,
}

impl<E: Environment> ObliviousSequence<E> {
    pub fn new(instances: Vec<(E::LossInstance, E::DynInstance)>) -> Self {
        ObliviousSequence { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

impl<E: Environment> Adversary<E> for ObliviousSequence<E> {
    fn id(&self) -> String {
        format!("oblivious({})", self.instances.len())
    }

    fn emit(
        &mut self,
        _: &E,
        t: usize,
        _: Option<&DeclaredAction<E::Policy>>,
        _: &mut dyn RngCore,
    ) -> Result<(E::LossInstance, E::DynInstance), StrategyError> {
        self.instances
            .get(t - 1)
            .cloned()
            .ok_or_else(|| StrategyError::Invalid(format!("sequence of length {} exhausted at round {t}", self.instances.len())))
    }
}

type Sampler<E> =
    Box<dyn FnMut(&mut dyn RngCore) -> (<E as Environment>::LossInstance, <E as Environment>::DynInstance)>;

/// Draws each round's instance independently from the adversary substream.
pub struct IidAdversary<E: Environment> {
    label: String,
    sampler: Sampler<E>,
}

impl<E: Environment> IidAdversary<E> {
    pub fn new(
        label: impl Into<String>,
        sampler: impl FnMut(&mut dyn RngCore) -> (E::LossInstance, E::DynInstance) + 'static,
    ) -> Self {
        IidAdversary { label: label.into(), sampler: Box::new(sampler) }
    }
}

impl<E: Environment> Adversary<E> for IidAdversary<E> {
    fn id(&self) -> String {
        format!("iid({})", self.label)
    }

    fn emit(
        &mut self,
        _: &E,
        _: usize,
        _: Option<&DeclaredAction<E::Policy>>,
        rng: &mut dyn RngCore,
    ) -> Result<(E::LossInstance, E::DynInstance), StrategyError> {
        Ok((self.sampler)(rng))
    }
}
