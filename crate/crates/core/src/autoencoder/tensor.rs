use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense row-major tensor. Serializes as nested arrays following its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Option<Tensor> {
        (shape.iter().product::<usize>() == data.len()).then(|| Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

struct Nested<'a> {
    shape: &'a [usize],
    data: &'a [f64],
}

impl Serialize for Nested<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let (outer, inner) = self.shape.split_first().expect("tensors have rank >= 1");
        let mut seq = serializer.serialize_seq(Some(*outer))?;
        if inner.is_empty() {
            for v in self.data {
                seq.serialize_element(v)?;
            }
        } else {
            let stride: usize = inner.iter().product();
            for chunk in self.data.chunks(stride.max(1)) {
                seq.serialize_element(&Nested {
                    shape: inner,
                    data: chunk,
                })?;
            }
        }
        seq.end()
    }
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Nested {
            shape: &self.shape,
            data: &self.data,
        }
        .serialize(serializer)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NestedValue {
    Scalar(f64),
    List(Vec<NestedValue>),
}

fn flatten(value: &NestedValue, depth: usize, shape: &mut Vec<usize>, out: &mut Vec<f64>) -> Result<(), String> {
    match value {
        NestedValue::Scalar(v) => {
            if depth != shape.len() {
                return Err("ragged tensor: scalar at wrong depth".into());
            }
            out.push(*v);
        }
        NestedValue::List(items) => {
            if depth == shape.len() {
                if !out.is_empty() {
                    return Err("ragged tensor: unexpected nesting".into());
                }
                shape.push(items.len());
            } else if depth > shape.len() || shape[depth] != items.len() {
                return Err("ragged tensor: rows differ in length".into());
            }
            for item in items {
                flatten(item, depth + 1, shape, out)?;
            }
        }
    }
    Ok(())
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = NestedValue::deserialize(deserializer)?;
        if matches!(value, NestedValue::Scalar(_)) {
            return Err(serde::de::Error::custom("expected an array"));
        }
        let mut shape = Vec::new();
        let mut data = Vec::new();
        flatten(&value, 0, &mut shape, &mut data).map_err(serde::de::Error::custom)?;
        if data.len() != shape.iter().product::<usize>() {
            return Err(serde::de::Error::custom("ragged tensor"));
        }
        Ok(Tensor { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_as_nested_arrays() {
        let t = Tensor::from_vec(&[2, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "[[[1.0,2.0,3.0]],[[4.0,5.0,6.5]]]");
        let back: Tensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_ragged_input() {
        assert!(serde_json::from_str::<Tensor>("[[1.0,2.0],[3.0]]").is_err());
        assert!(serde_json::from_str::<Tensor>("[[1.0],2.0]").is_err());
        assert!(serde_json::from_str::<Tensor>("3.0").is_err());
    }
}
