use ndarray::{ArrayView1, ArrayView2, ArrayView3, Ix1, Ix2, Ix3};
use serde::{Deserialize, Serialize};

/// Handle into a [`ParamLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named, shaped regions of one flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub specs: Vec<ParamSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub(crate) fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let spec = ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.total,
        };
        self.total += spec.len();
        self.specs.push(spec);
        ParamId(self.specs.len() - 1)
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn range(&self, id: ParamId) -> std::ops::Range<usize> {
        let s = &self.specs[id.0];
        s.offset..s.offset + s.len()
    }

    pub(crate) fn view1<'a, T>(&self, data: &'a [T], id: ParamId) -> ArrayView1<'a, T> {
        self.view::<T, Ix1>(data, id)
    }

    pub(crate) fn view2<'a, T>(&self, data: &'a [T], id: ParamId) -> ArrayView2<'a, T> {
        self.view::<T, Ix2>(data, id)
    }

    pub(crate) fn view3<'a, T>(&self, data: &'a [T], id: ParamId) -> ArrayView3<'a, T> {
        self.view::<T, Ix3>(data, id)
    }

    fn view<'a, T, D: ndarray::Dimension>(
        &self,
        data: &'a [T],
        id: ParamId,
    ) -> ndarray::ArrayView<'a, T, D> {
        let spec = &self.specs[id.0];
        ndarray::ArrayView::from_shape(spec.shape.clone(), &data[self.range(id)])
            .expect("layout shape")
            .into_dimensionality::<D>()
            .expect("layout rank")
    }
}
